from dateutil import parser as date_parser
from rest_framework import serializers

from apps.utils.baseSerializers import DataclassSerializer

from .constants import PANEL_KEY_COLUMNS
from .models import SchemaConfig


class CalendarMonthField(serializers.Field):
    """'YYYY-MM' (or any date dateutil understands) pinned to the first of the month."""

    default_error_messages = {
        'invalid': 'Expected a calendar month such as "2007-01".',
    }

    def to_internal_value(self, data):
        if data in (None, ''):
            return None
        try:
            parsed = date_parser.parse(str(data), default=date_parser.parse('2000-01-01'))
        except (ValueError, OverflowError):
            self.fail('invalid')
        return parsed.date().replace(day=1)

    def to_representation(self, value):
        return value.strftime('%Y-%m') if value else None


class SchemaConfigSerializer(DataclassSerializer):
    covariates = serializers.ListField(child=serializers.CharField(), allow_empty=True, default=list)
    calendar_origin = CalendarMonthField(required=False, allow_null=True, default=None)

    class Meta:
        dataclass = SchemaConfig

    def validate_covariates(self, value):
        if len(set(value)) != len(value):
            duplicates = sorted({name for name in value if value.count(name) > 1})
            raise serializers.ValidationError(f"Duplicate covariate names: {', '.join(duplicates)}")
        reserved = [name for name in value if name in PANEL_KEY_COLUMNS]
        if reserved:
            raise serializers.ValidationError(f"Covariate names clash with panel columns: {', '.join(reserved)}")
        return tuple(value)
