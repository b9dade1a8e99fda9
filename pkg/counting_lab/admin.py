from django.contrib import admin

from .models import ScenarioRun


@admin.register(ScenarioRun)
class ScenarioRunAdmin(admin.ModelAdmin):
    list_display = ('name', 'seed', 'truncation', 'status', 'exit_code', 'stage', 'created_at')
    list_filter = ('status', 'stage')
    search_fields = ('name',)
    readonly_fields = ('manifest', 'created_at', 'updated_at')
