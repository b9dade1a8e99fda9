from django.http import JsonResponse
from django.shortcuts import get_object_or_404

# OpenTelemetry Tracing
from opentelemetry import trace
from opentelemetry.trace import Status, StatusCode

from spectral_lab.instrumentation import trace_lab_request

from .models import ScenarioRun

tracer = trace.get_tracer(__name__)


@trace_lab_request
def run_list(request):
    with tracer.start_as_current_span("run_list_query") as span:
        try:
            runs = ScenarioRun.objects.all()
            status = request.GET.get('status')
            if status:
                runs = runs.filter(status=status)
            rows = [run.to_dict() for run in runs]
            span.set_attributes({
                "db.operation": "SELECT",
                "db.model": "ScenarioRun",
                "db.row_count": len(rows)
            })
            return JsonResponse({'runs': rows})
        except Exception as e:
            span.record_exception(e)
            span.set_status(Status(StatusCode.ERROR))
            raise


@trace_lab_request
def run_detail(request, pk):
    with tracer.start_as_current_span("run_detail_query") as span:
        try:
            run = get_object_or_404(ScenarioRun, pk=pk)
            span.set_attributes({
                "run.id": pk,
                "db.operation": "SELECT"
            })
            return JsonResponse(run.to_dict(with_manifest=True))
        except Exception as e:
            span.record_exception(e)
            span.set_status(Status(StatusCode.ERROR))
            raise
