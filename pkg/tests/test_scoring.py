"""Scoring backends: tokenizer, mock, trained toy model, HTTP clients, and
reply parsing.

The toy-model oracle works the probabilities out by hand for a one-pair
corpus: with Laplace alpha=1 and vocabulary {order, late}, the trained class
"order" gives each token probability (1+1)/(2+2) = 0.5, and unseen candidate
words fall back to a uniform background over (n_classes + 1) states.
"""

from __future__ import annotations

import math

import pytest

from promptclf.corpus import LabelCatalog, LabelEntry
from promptclf.prompting import FilledPrompt
from promptclf.scoring import (
    API_BASE_ENV,
    API_KEY_ENV,
    CHAT_INSTRUCTION,
    BackendConfig,
    BackendError,
    ChatBackend,
    LogitServerBackend,
    MockBackend,
    ProtocolError,
    ToyBackend,
    TrainingPair,
    build_backend,
    chat_classify,
    parse_index_response,
    tokenize,
    toy_fit,
)

from stubserver import StubServer


def prompt_of(text: str) -> FilledPrompt:
    return FilledPrompt(text=text, template_id="t", record_id="r", truncated=False)


FAST = BackendConfig(kind="logit-server", endpoint="placeholder", timeout=5.0,
                     max_retries=3, backoff_base=0.01)


# ---------------------------------------------------------------- tokenize


def test_tokenize_lowercases_and_splits_on_non_alphanumerics():
    assert tokenize("Hello, World! 123") == ["hello", "world", "123"]
    assert tokenize("don't stop") == ["don", "t", "stop"]
    assert tokenize("  ") == []
    assert tokenize("a-b_c") == ["a", "b", "c"]


# ---------------------------------------------------------------- mock


def test_mock_overlap_reference_example():
    backend = MockBackend()
    out = backend.score_candidates(
        prompt_of("the order was late <MASK>"), ("order", "banana")
    )
    scores = out.as_dict()
    assert scores["order"] == pytest.approx(1.0, abs=1e-5)
    assert scores["banana"] == pytest.approx(0.0, abs=1e-5)
    assert scores["order"] > scores["banana"]


def test_mock_is_deterministic_and_order_independent():
    backend = MockBackend()
    p = prompt_of("we need help with the order <MASK>")
    a = backend.score_candidates(p, ("order", "help", "other")).as_dict()
    b = backend.score_candidates(p, ("other", "order", "help")).as_dict()
    assert a == b
    again = MockBackend().score_candidates(p, ("order", "help", "other")).as_dict()
    assert a == again


def test_mock_epsilon_breaks_ties_stably():
    backend = MockBackend()
    p = prompt_of("nothing in common <MASK>")
    scores = backend.score_candidates(p, ("alpha", "beta")).as_dict()
    # zero overlap for both, but the hash epsilon separates them reproducibly
    assert scores["alpha"] != scores["beta"]
    assert abs(scores["alpha"] - scores["beta"]) <= 2e-6


def test_candidate_validation():
    backend = MockBackend()
    p = prompt_of("x <MASK>")
    with pytest.raises(BackendError):
        backend.score_candidates(p, ())
    with pytest.raises(BackendError):
        backend.score_candidates(p, ("a", "a"))
    with pytest.raises(BackendError):
        backend.score_candidates(p, ("a", ""))


# ---------------------------------------------------------------- toy model


def test_toy_closed_form_scores():
    backend = toy_fit([TrainingPair("order late", "order")], alpha=1.0)
    out = backend.score_candidates(prompt_of("order late <MASK>"), ("order", "banana"))
    scores = out.as_dict()
    # vocabulary {order, late}: P(token|order) = (1+1)/(2+2) = 1/2 per token
    # prior = 1, and the prompt's two in-vocab tokens each contribute log 1/2
    assert scores["order"] == pytest.approx(2 * math.log(0.5), abs=1e-12)
    # unseen word: uniform background 1/(K+1) prior with K=1 class, plus the
    # two in-vocab tokens at 1/V with V=2
    assert scores["banana"] == pytest.approx(3 * math.log(0.5), abs=1e-12)
    assert scores["order"] - scores["banana"] == pytest.approx(math.log(2), abs=1e-12)


def test_toy_priors_follow_pair_counts():
    pairs = [
        TrainingPair("alpha beta", "yes"),
        TrainingPair("alpha gamma", "yes"),
        TrainingPair("delta", "no"),
    ]
    backend = toy_fit(pairs, alpha=1.0)
    # a prompt with no in-vocabulary tokens isolates the priors
    out = backend.score_candidates(prompt_of("zzz qqq <MASK>"), ("yes", "no")).as_dict()
    assert out["yes"] == pytest.approx(math.log(2 / 3), abs=1e-12)
    assert out["no"] == pytest.approx(math.log(1 / 3), abs=1e-12)


def test_toy_alpha_smoothing_hand_case():
    backend = toy_fit([TrainingPair("order late", "order")], alpha=2.0)
    out = backend.score_candidates(prompt_of("order <MASK>"), ("order",)).as_dict()
    # (count 1 + alpha 2) / (total 2 + alpha 2 * V 2) = 3/6 = 1/2
    assert out["order"] == pytest.approx(math.log(0.5), abs=1e-12)


def test_toy_duplicate_pairs_shift_priors():
    pairs = [
        TrainingPair("x", "a"),
        TrainingPair("x", "a"),
        TrainingPair("y", "b"),
    ]
    backend = toy_fit(pairs)
    out = backend.score_candidates(prompt_of("zzz <MASK>"), ("a", "b")).as_dict()
    assert out["a"] == pytest.approx(math.log(2 / 3), abs=1e-12)


def test_toy_skips_out_of_vocabulary_prompt_tokens():
    backend = toy_fit([TrainingPair("order late", "order")])
    with_oov = backend.score_candidates(
        prompt_of("order late zebra unicorn <MASK>"), ("order",)
    ).as_dict()
    without = backend.score_candidates(prompt_of("order late <MASK>"), ("order",)).as_dict()
    assert with_oov == without


def test_toy_learns_class_separation():
    pairs = []
    for i in range(5):
        pairs.append(TrainingPair(f"invoice payment bill {i}", "billing"))
        pairs.append(TrainingPair(f"parcel tracking delivery {i}", "shipping"))
    backend = toy_fit(pairs)
    out = backend.score_candidates(
        prompt_of("where is my parcel delivery <MASK>"), ("billing", "shipping")
    ).as_dict()
    assert out["shipping"] > out["billing"]


def test_toy_save_load_round_trip(tmp_path):
    pairs = [
        TrainingPair("alpha beta gamma", "one"),
        TrainingPair("beta delta", "two"),
        TrainingPair("gamma gamma alpha", "one"),
    ]
    backend = toy_fit(pairs, alpha=1.5)
    path = tmp_path / "state.json"
    backend.save(path)
    loaded = ToyBackend.load(path)
    assert loaded.backend_id == backend.backend_id
    p = prompt_of("alpha beta delta <MASK>")
    cands = ("one", "two", "unseen")
    assert loaded.score_candidates(p, cands).as_dict() == backend.score_candidates(
        p, cands
    ).as_dict()
    # saving again produces identical bytes
    path2 = tmp_path / "state2.json"
    loaded.save(path2)
    assert path.read_bytes() == path2.read_bytes()


def test_toy_fit_rejects_bad_inputs():
    with pytest.raises(BackendError):
        toy_fit([])
    with pytest.raises(BackendError):
        toy_fit([TrainingPair("x", "y")], alpha=0.0)
    with pytest.raises(BackendError):
        toy_fit([TrainingPair("x", "")])


def test_toy_target_words_are_case_insensitive():
    backend = toy_fit([TrainingPair("a b", "Order"), TrainingPair("c d", "ORDER")])
    out = backend.score_candidates(prompt_of("a <MASK>"), ("order",))
    assert len(out.candidates) == 1  # single class, scored fine


# ---------------------------------------------------------------- build_backend


def test_build_backend_dispatch(tmp_path):
    assert build_backend(BackendConfig(kind="mock")).kind == "mock"
    lg = build_backend(BackendConfig(kind="logit-server", endpoint="http://127.0.0.1:1"))
    assert lg.kind == "logit-server"
    assert build_backend(BackendConfig(kind="toy")) is None  # needs training first
    state = tmp_path / "toy.json"
    toy_fit([TrainingPair("a", "b")]).save(state)
    assert build_backend(BackendConfig(kind="toy", state_path=str(state))).kind == "toy"
    with pytest.raises(BackendError):
        build_backend(BackendConfig(kind="chat"))  # no endpoint anywhere


# ---------------------------------------------------------------- logit server


def test_logit_server_round_trip():
    def score(body):
        assert set(body) == {"prompt", "candidates"}
        return 200, {"scores": [float(len(c)) for c in body["candidates"]]}

    with StubServer({"/score": score}) as stub:
        backend = LogitServerBackend(
            BackendConfig(kind="logit-server", endpoint=stub.endpoint, backoff_base=0.01)
        )
        out = backend.score_candidates(prompt_of("hello <MASK>"), ("ab", "wxyz"))
        assert out.as_dict() == {"ab": 2.0, "wxyz": 4.0}
        assert backend.backend_id == f"logit-server:{stub.endpoint}"


def test_logit_server_retries_transient_errors():
    calls = {"n": 0}

    def flaky(body):
        calls["n"] += 1
        if calls["n"] <= 2:
            return 500, {"error": "boom"}
        return 200, {"scores": [1.0]}

    with StubServer({"/score": flaky}) as stub:
        backend = LogitServerBackend(
            BackendConfig(kind="logit-server", endpoint=stub.endpoint, backoff_base=0.01)
        )
        out = backend.score_candidates(prompt_of("x <MASK>"), ("a",))
        assert out.scores == (1.0,)
        assert calls["n"] == 3  # two failures, one success


def test_logit_server_gives_up_after_max_retries():
    def always_500(body):
        return 500, {"error": "down"}

    with StubServer({"/score": always_500}) as stub:
        backend = LogitServerBackend(
            BackendConfig(
                kind="logit-server", endpoint=stub.endpoint, max_retries=2, backoff_base=0.01
            )
        )
        with pytest.raises(BackendError):
            backend.score_candidates(prompt_of("x <MASK>"), ("a",))
        assert len(stub.requests) == 3  # initial try + 2 retries


def test_logit_server_does_not_retry_client_errors():
    def reject(body):
        return 400, {"error": "bad request"}

    with StubServer({"/score": reject}) as stub:
        backend = LogitServerBackend(
            BackendConfig(kind="logit-server", endpoint=stub.endpoint, backoff_base=0.01)
        )
        with pytest.raises(BackendError):
            backend.score_candidates(prompt_of("x <MASK>"), ("a",))
        assert len(stub.requests) == 1


def test_logit_server_retries_429():
    calls = {"n": 0}

    def throttle(body):
        calls["n"] += 1
        return (429, {"error": "slow down"}) if calls["n"] == 1 else (200, {"scores": [0.5]})

    with StubServer({"/score": throttle}) as stub:
        backend = LogitServerBackend(
            BackendConfig(kind="logit-server", endpoint=stub.endpoint, backoff_base=0.01)
        )
        assert backend.score_candidates(prompt_of("x <MASK>"), ("a",)).scores == (0.5,)
        assert calls["n"] == 2


@pytest.mark.parametrize(
    "payload",
    [
        {"scores": [1.0, 2.0]},  # wrong count for one candidate
        {"scores": ["high"]},  # non-numeric
        {"scores": None},
        {"wrong_key": [1.0]},
        "not even json",  # handler returns raw string -> not a dict
    ],
)
def test_logit_server_rejects_protocol_violations(payload):
    with StubServer({"/score": lambda body: (200, payload)}) as stub:
        backend = LogitServerBackend(
            BackendConfig(kind="logit-server", endpoint=stub.endpoint, backoff_base=0.01)
        )
        with pytest.raises(ProtocolError):
            backend.score_candidates(prompt_of("x <MASK>"), ("a",))


def test_logit_server_connection_refused_is_backend_error():
    backend = LogitServerBackend(
        BackendConfig(
            kind="logit-server",
            endpoint="http://127.0.0.1:9",  # discard port; nothing listens
            max_retries=1,
            backoff_base=0.01,
            timeout=0.5,
        )
    )
    with pytest.raises(BackendError):
        backend.score_candidates(prompt_of("x <MASK>"), ("a",))


def test_logit_server_requires_endpoint():
    with pytest.raises(BackendError):
        LogitServerBackend(BackendConfig(kind="logit-server"))


def test_embed_round_trip_and_count_check():
    def embed(body):
        return 200, {"vectors": [[float(len(t)), 1.0] for t in body["texts"]]}

    with StubServer({"/embed": embed}) as stub:
        backend = LogitServerBackend(
            BackendConfig(kind="logit-server", endpoint=stub.endpoint, backoff_base=0.01)
        )
        vectors = backend.embed(["ab", "cdef"])
        assert vectors == [[2.0, 1.0], [4.0, 1.0]]

    with StubServer({"/embed": lambda b: (200, {"vectors": [[1.0]]})}) as stub:
        backend = LogitServerBackend(
            BackendConfig(kind="logit-server", endpoint=stub.endpoint, backoff_base=0.01)
        )
        with pytest.raises(ProtocolError):
            backend.embed(["a", "b"])


# ---------------------------------------------------------------- chat


@pytest.fixture
def catalog14():
    from promptclf.assets import default_catalog

    return default_catalog()


def chat_route(reply: str):
    def handler(body):
        return 200, {"choices": [{"message": {"role": "assistant", "content": reply}}]}

    return handler


def test_chat_happy_path_and_request_shape(catalog14, monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "sk-test-123")
    with StubServer({"/v1/chat/completions": chat_route("6")}) as stub:
        backend = ChatBackend(
            BackendConfig(kind="chat", endpoint=stub.endpoint, model="helper", backoff_base=0.01)
        )
        got = backend.classify(prompt_of("hello there <MASK>"), catalog14)
        assert got == 6
        path, body, headers = stub.requests[0]
        assert path == "/v1/chat/completions"
        assert body["model"] == "helper"
        assert body["temperature"] == 0
        content = body["messages"][0]["content"]
        assert CHAT_INSTRUCTION in content
        assert "<MASK>" not in content
        assert content.startswith("hello there")
        assert headers.get("Authorization") == "Bearer sk-test-123"


def test_chat_omits_auth_header_without_key(catalog14, monkeypatch):
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    with StubServer({"/v1/chat/completions": chat_route("0")}) as stub:
        backend = ChatBackend(BackendConfig(kind="chat", endpoint=stub.endpoint, backoff_base=0.01))
        backend.classify(prompt_of("x <MASK>"), catalog14)
        _, _, headers = stub.requests[0]
        assert "Authorization" not in headers


def test_chat_endpoint_env_fallback(catalog14, monkeypatch):
    with StubServer({"/v1/chat/completions": chat_route("2")}) as stub:
        monkeypatch.setenv(API_BASE_ENV, stub.endpoint)
        backend = ChatBackend(BackendConfig(kind="chat", backoff_base=0.01))
        assert backend.classify(prompt_of("x <MASK>"), catalog14) == 2
    monkeypatch.delenv(API_BASE_ENV)
    with pytest.raises(BackendError):
        ChatBackend(BackendConfig(kind="chat"))


def test_chat_unparseable_reply_is_not_retried(catalog14):
    with StubServer(
        {"/v1/chat/completions": chat_route("I could not decide on a label.")}
    ) as stub:
        backend = ChatBackend(BackendConfig(kind="chat", endpoint=stub.endpoint, backoff_base=0.01))
        assert backend.classify(prompt_of("x <MASK>"), catalog14) is None
        assert len(stub.requests) == 1  # parse-failure is a value, not an error


def test_chat_malformed_response_is_protocol_error(catalog14):
    with StubServer({"/v1/chat/completions": lambda b: (200, {"choices": []})}) as stub:
        backend = ChatBackend(BackendConfig(kind="chat", endpoint=stub.endpoint, backoff_base=0.01))
        with pytest.raises(ProtocolError):
            backend.classify(prompt_of("x <MASK>"), catalog14)


def test_chat_classify_helper(catalog14):
    with StubServer({"/v1/chat/completions": chat_route("13")}) as stub:
        backend = ChatBackend(BackendConfig(kind="chat", endpoint=stub.endpoint, backoff_base=0.01))
        assert chat_classify(backend, prompt_of("y <MASK>"), catalog14) == 13


# ---------------------------------------------------------------- reply parsing


@pytest.mark.parametrize(
    "reply, expected",
    [
        ("6", 6),
        (" 13 ", 13),
        ("0", 0),
        ("The answer is: 13.", 13),
        ("I think it is 4", 4),
        ("label 7 fits", 7),
        ("42 is out of range but 3 is not", 3),  # first *valid* index wins
        ("100", None),  # out of range, no fallback
        ("-1", 1),  # the regex sees a bare "1"
        ("nothing useful here", None),
        ("", None),
    ],
)
def test_parse_index_inter_cases(reply, expected, catalog14):
    assert parse_index_response(reply, catalog14) == expected


@pytest.mark.parametrize(
    "reply, expected",
    [
        ("Order Creation", 6),
        ("order creation", 6),
        ("This is clearly Issue Handling.", 5),
        ("general after purchase", 2),  # longest match beats plain "General"
        ("General", 1),
        ("Prepare for Exchange & Returns", 11),
        ("I'd go with Planning & Advice here", 10),
    ],
)
def test_parse_index_name_fallback(reply, expected, catalog14):
    assert parse_index_response(reply, catalog14) == expected


def test_parse_index_prefers_integer_over_name(catalog14):
    assert parse_index_response("3 - Help Integrating the Product", catalog14) == 3
    assert parse_index_response("Order Creation (label 6)", catalog14) == 6


def test_parse_index_never_returns_out_of_range(catalog14):
    import random

    rng = random.Random(0)
    alphabet = "abc 0123456789 XYZ .,!"
    for _ in range(300):
        reply = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 40)))
        got = parse_index_response(reply, catalog14)
        assert got is None or 0 <= got < len(catalog14)


def test_parse_index_tiny_catalog():
    catalog = LabelCatalog((LabelEntry(0, "Yes", ""), LabelEntry(1, "No", "")))
    assert parse_index_response("1", catalog) == 1
    assert parse_index_response("yes", catalog) == 0
    assert parse_index_response("2", catalog) is None
