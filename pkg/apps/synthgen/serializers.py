from rest_framework import serializers

from apps.core.serializers import CalendarMonthField
from apps.utils.baseSerializers import DataclassSerializer

from .models import CovariateKind, CovariateSpec, GeneratorSpec


class UnitIntervalField(serializers.FloatField):
    """Probability in [0, 1], or a monthly hazard in [0, 1) with ``open_upper``."""

    def __init__(self, open_upper=False, **kwargs):
        self.open_upper = open_upper
        super().__init__(min_value=0.0, max_value=1.0, **kwargs)

    def to_internal_value(self, data):
        value = super().to_internal_value(data)
        if self.open_upper and value >= 1.0:
            raise serializers.ValidationError('monthly hazards must lie in [0, 1)')
        return value


class CovariateSpecSerializer(DataclassSerializer):
    name = serializers.CharField()
    kind = serializers.ChoiceField(choices=CovariateKind.choices, default=CovariateKind.NORMAL)
    scale = serializers.FloatField(min_value=0.0, default=1.0)
    prob = UnitIntervalField(default=0.5)
    phi = serializers.FloatField(default=0.9)

    class Meta:
        dataclass = CovariateSpec

    def validate_kind(self, value):
        return CovariateKind(value)

    def validate_phi(self, value):
        if not -1.0 < value < 1.0:
            raise serializers.ValidationError('AR(1) coefficient must lie in (-1, 1)')
        return value


class GeneratorSpecSerializer(DataclassSerializer):
    n_loans = serializers.IntegerField(min_value=1)
    max_horizon = serializers.IntegerField(min_value=2)
    true_beta = serializers.ListField(child=serializers.FloatField(), allow_empty=True, default=list)
    baseline_hazards = serializers.ListField(child=UnitIntervalField(open_upper=True), allow_empty=False)
    covariates = CovariateSpecSerializer(many=True, required=False)
    cure_prob = UnitIntervalField(default=0.0)
    settle_hazard = UnitIntervalField(open_upper=True, default=0.0)
    writeoff_hazard = UnitIntervalField(open_upper=True, default=0.0)
    censor_min = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    max_left_truncation = serializers.IntegerField(min_value=0, default=0)
    seed = serializers.IntegerField(min_value=0, default=0)
    calendar_origin = CalendarMonthField(required=False, allow_null=True, default=None)

    class Meta:
        dataclass = GeneratorSpec

    def validate(self, attrs):
        covariates = attrs.get('covariates') or []
        beta = attrs.get('true_beta', [])
        if covariates and len(covariates) != len(beta):
            raise serializers.ValidationError(
                f"true_beta has {len(beta)} entries for {len(covariates)} covariates")
        names = [cov['name'] for cov in covariates]
        if len(set(names)) != len(names):
            raise serializers.ValidationError('covariate names must be unique')
        censor_min = attrs.get('censor_min')
        if censor_min is not None and censor_min > attrs['max_horizon']:
            raise serializers.ValidationError('censor_min cannot exceed max_horizon')
        if attrs.get('max_left_truncation', 0) >= attrs['max_horizon']:
            raise serializers.ValidationError('max_left_truncation must be below max_horizon')
        return attrs

    def create(self, validated_data):
        covariates = tuple(CovariateSpec(**cov) for cov in validated_data.pop('covariates', None) or [])
        validated_data['true_beta'] = tuple(validated_data.get('true_beta', ()))
        validated_data['baseline_hazards'] = tuple(validated_data['baseline_hazards'])
        return GeneratorSpec(covariates=covariates, **validated_data)
