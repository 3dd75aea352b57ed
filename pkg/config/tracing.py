"""
OpenTelemetry set-up for long-running simulator commands.

Spans are recorded for every minimisation, sweep entry, energy evaluation and
steady-state solve. Evaluations and solves fire thousands of times per run,
so they are recorded (their context still parents nested spans) but never
exported.
"""

import logging
from typing import Optional

from opentelemetry import trace
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import ReadableSpan, SpanProcessor, TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor, ConsoleSpanExporter, SimpleSpanProcessor

from config.settings import Settings, get_settings

logger = logging.getLogger(__name__)

SERVICE_NAME = "mini-cavityfield"


class FilteringSpanProcessor(SpanProcessor):
    """
    Wraps a delegate SpanProcessor and only forwards spans whose names
    do NOT start with one of the noise prefixes.
    """

    _NOISE_PREFIXES = ("cavityfield.evaluate", "cavityfield.steady_state")

    def __init__(self, delegate: SpanProcessor):
        self._delegate = delegate

    def on_start(self, span, parent_context=None):
        self._delegate.on_start(span, parent_context)

    def on_end(self, span: ReadableSpan):
        if not span.name.startswith(self._NOISE_PREFIXES):
            self._delegate.on_end(span)

    def shutdown(self):
        self._delegate.shutdown()

    def force_flush(self, timeout_millis=None):
        return self._delegate.force_flush(timeout_millis)


_provider: Optional[TracerProvider] = None


def setup_tracing(settings: Optional[Settings] = None) -> Optional[TracerProvider]:
    """
    Install a global tracer provider according to ``CAVITYFIELD_TRACE``.

    ``none`` leaves the OpenTelemetry no-op provider in place, ``console``
    prints finished spans, ``otlp`` ships them over gRPC to
    ``CAVITYFIELD_OTLP_ENDPOINT``. Calling it again returns the installed
    provider.
    """
    global _provider
    settings = settings or get_settings()
    if settings.trace == "none":
        return None
    if _provider is not None:
        return _provider

    if settings.trace == "console":
        processor: SpanProcessor = SimpleSpanProcessor(ConsoleSpanExporter())
    else:
        from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import OTLPSpanExporter

        processor = BatchSpanProcessor(OTLPSpanExporter(endpoint=settings.otlp_endpoint, insecure=True))

    provider = TracerProvider(resource=Resource(attributes={"service.name": SERVICE_NAME}))
    provider.add_span_processor(FilteringSpanProcessor(processor))
    trace.set_tracer_provider(provider)
    _provider = provider
    logger.info(f"tracing enabled ({settings.trace})")
    return provider


def shutdown_tracing() -> None:
    if _provider is not None:
        _provider.force_flush()
