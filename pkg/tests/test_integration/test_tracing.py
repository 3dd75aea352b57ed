from unittest.mock import patch

import numpy as np
import pytest
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import SimpleSpanProcessor
from opentelemetry.sdk.trace.export.in_memory_span_exporter import InMemorySpanExporter

import config.tracing as tracing
from config.settings import Settings
from config.tracing import SERVICE_NAME, FilteringSpanProcessor, setup_tracing
from tools.optimizer import OptimizerConfig, VariationalSpace, minimize
from utilities.model import LiebLinigerParams


@pytest.fixture
def exporter():
    return InMemorySpanExporter()


@pytest.fixture
def tracer(exporter):
    provider = TracerProvider()
    provider.add_span_processor(FilteringSpanProcessor(SimpleSpanProcessor(exporter)))
    return provider.get_tracer("test")


def test_noise_spans_are_dropped(tracer, exporter):
    with tracer.start_as_current_span("cavityfield.minimize"):
        with tracer.start_as_current_span("cavityfield.evaluate"):
            pass
        with tracer.start_as_current_span("cavityfield.steady_state"):
            pass
    assert [span.name for span in exporter.get_finished_spans()] == ["cavityfield.minimize"]


def test_tracing_disabled():
    assert setup_tracing(Settings(trace="none")) is None


@patch("config.tracing.trace.set_tracer_provider")
def test_console_provider_is_installed_once(mock_set, monkeypatch):
    monkeypatch.setattr(tracing, "_provider", None)
    first = setup_tracing(Settings(trace="console"))
    second = setup_tracing(Settings(trace="console"))
    assert first is second
    assert mock_set.call_count == 1
    assert first.resource.attributes["service.name"] == SERVICE_NAME


def test_minimize_records_one_exported_span(tracer, exporter):
    space = VariationalSpace.free_cmps(D=1)
    lam0 = space.encode_free(np.zeros((1, 1)), np.array([[0.3]]), 1.0)
    with patch("tools.optimizer.tracer", tracer):
        result = minimize(space, lam0, LiebLinigerParams(v=1.0), OptimizerConfig(step=0.05))
    (span,) = exporter.get_finished_spans()
    assert span.name == "cavityfield.minimize"
    assert span.attributes["v"] == 1.0
    assert span.attributes["f_star"] == result.f_star
