"""Built-in defaults: a 14-intent catalog, four templates and four verbalizers.

A fifth template that spells out every class description is generated from
the catalog on demand rather than shipped as text.
"""

from __future__ import annotations

from importlib import resources

from .corpus import LabelCatalog, load_catalog
from .prompting import Template, build_description_template, load_templates
from .verbalizing import Verbalizer, load_verbalizers

DESCRIPTION_TEMPLATE_ID = "5"


def _data_path(name: str):
    return resources.files("promptclf.data").joinpath(name)


def default_catalog() -> LabelCatalog:
    with resources.as_file(_data_path("catalog.json")) as path:
        return load_catalog(path)


def default_templates(catalog: LabelCatalog | None = None) -> dict[str, Template]:
    """Shipped templates plus the catalog-derived description template."""
    if catalog is None:
        catalog = default_catalog()
    with resources.as_file(_data_path("templates.json")) as path:
        templates = load_templates(path)
    templates[DESCRIPTION_TEMPLATE_ID] = build_description_template(
        catalog, DESCRIPTION_TEMPLATE_ID
    )
    return templates


def default_verbalizers(catalog: LabelCatalog | None = None) -> dict[str, Verbalizer]:
    if catalog is None:
        catalog = default_catalog()
    with resources.as_file(_data_path("verbalizers.json")) as path:
        return load_verbalizers(path, len(catalog))
