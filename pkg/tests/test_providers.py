"""Provider plumbing: scenario/config loading, estimation, null provider."""

from __future__ import annotations

import pytest
import yaml

from labloop.errors import TransportError
from labloop.gateway import ProviderConfig
from labloop.providers import CallContext, HTTPProvider, NullProvider, ScriptedProvider


def ctx(run="r", iteration=1, ordinal=0) -> CallContext:
    return CallContext(run_id=run, iteration_index=iteration, ordinal=ordinal)


def test_scripted_provider_from_file(tmp_path):
    path = tmp_path / "scenario.yaml"
    path.write_text(
        yaml.safe_dump(
            {
                "defaults": {"input_tokens": 5, "output_tokens": 7},
                "rules": [{"run": "r*", "responses": [{"text": "hello"}]}],
            }
        ),
        "utf-8",
    )
    provider = ScriptedProvider.from_file(path)
    result = provider.complete(ctx(), "m", "p", None)
    assert result.text == "hello"
    assert (result.input_tokens, result.output_tokens) == (5, 7)


def test_scripted_rule_matching_and_repeat_modes():
    provider = ScriptedProvider(
        {
            "rules": [
                {"run": "a*", "iteration": 2, "responses": [{"text": "specific"}]},
                {"run": "*", "repeat": "cycle", "responses": [{"text": "one"}, {"text": "two"}]},
            ]
        }
    )
    assert provider.complete(ctx("abc", 2), "m", "p", None).text == "specific"
    assert provider.complete(ctx("abc", 1, 0), "m", "p", None).text == "one"
    assert provider.complete(ctx("abc", 1, 1), "m", "p", None).text == "two"
    assert provider.complete(ctx("abc", 1, 2), "m", "p", None).text == "one"  # cycles


def test_scripted_repeat_error_exhausts():
    provider = ScriptedProvider(
        {"rules": [{"run": "*", "repeat": "error", "responses": [{"text": "only"}]}]}
    )
    assert provider.complete(ctx(ordinal=0), "m", "p", None).text == "only"
    with pytest.raises(TransportError):
        provider.complete(ctx(ordinal=1), "m", "p", None)


def test_scripted_no_rule_is_transport_error():
    provider = ScriptedProvider({"rules": []})
    with pytest.raises(TransportError, match="no scripted response"):
        provider.complete(ctx(), "m", "p", None)


def test_provider_config_from_file(tmp_path):
    path = tmp_path / "provider.yaml"
    path.write_text(
        yaml.safe_dump(
            {
                "provider_name": "example",
                "endpoint": "https://api.example.test",
                "credential_env": "EXAMPLE_KEY",
                "models": {
                    "small": {"input_price": 150000, "output_price": 600000},
                    "big": {"input_price": 3000000, "output_price": 15000000},
                },
            }
        ),
        "utf-8",
    )
    config = ProviderConfig.from_file(path)
    assert config.provider_name == "example"
    assert config.models["small"].input_price == 150_000
    assert config.models["big"].output_price == 15_000_000


def test_http_provider_estimates_worst_case_output():
    provider = HTTPProvider("https://x", "KEY_ENV", worst_case_output_tokens=4096)
    est_in, est_out = provider.estimate(ctx(), "m", "word " * 400, None)
    assert est_in >= 1
    assert est_out == 4096
    _in, capped = provider.estimate(ctx(), "m", "p", {"max_tokens": 128})
    assert capped == 128


def test_http_provider_requires_credential(monkeypatch):
    monkeypatch.delenv("MISSING_KEY", raising=False)
    provider = HTTPProvider("https://x", "MISSING_KEY")
    with pytest.raises(TransportError, match="MISSING_KEY"):
        provider.complete(ctx(), "m", "p", None)


def test_null_provider_always_fails():
    provider = NullProvider()
    with pytest.raises(TransportError):
        provider.estimate(ctx(), "m", "p", None)
    with pytest.raises(TransportError):
        provider.complete(ctx(), "m", "p", None)
