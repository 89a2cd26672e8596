from rest_framework import serializers

from apps.core.settings_manager import EngineSettings
from apps.utils.baseSerializers import DataclassSerializer

from .models import TROCConfig


class TROCConfigSerializer(DataclassSerializer):
    lambda_n = serializers.FloatField(default=EngineSettings.get_lambda_n)
    horizons = serializers.ListField(child=serializers.IntegerField(min_value=1), allow_empty=False,
                                     default=EngineSettings.get_horizons)
    threshold_step = serializers.FloatField(default=EngineSettings.get_threshold_step)

    class Meta:
        dataclass = TROCConfig

    def validate_lambda_n(self, value):
        if not 0.0 < 2.0 * value < 1.0:
            raise serializers.ValidationError('2 * lambda_n must lie in (0, 1)')
        return value

    def validate_threshold_step(self, value):
        if not 0.0 < value <= 0.5:
            raise serializers.ValidationError('threshold_step must lie in (0, 0.5]')
        return value

    def validate_horizons(self, value):
        return tuple(sorted(set(value)))


class SummarySerializer(serializers.Serializer):
    """One row of the diagnostics summary."""
    horizon = serializers.IntegerField()
    tauc = serializers.FloatField(allow_null=True)
    harrell_c = serializers.FloatField(allow_null=True)
    aic = serializers.FloatField()
    ks_D = serializers.FloatField()
    one_minus_D = serializers.FloatField()
