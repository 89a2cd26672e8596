import numpy as np
from rest_framework import serializers

from apps.core.models import Technique
from apps.core.settings_manager import EngineSettings
from apps.utils.baseSerializers import DataclassSerializer

from .models import BaselineHazard, CoxFit, FitOptions, Ties


class FitOptionsSerializer(DataclassSerializer):
    ties = serializers.ChoiceField(choices=Ties.CHOICES, default=EngineSettings.get_ties)
    max_iter = serializers.IntegerField(min_value=1, default=EngineSettings.get_max_iter)
    tol = serializers.FloatField(min_value=0.0, default=EngineSettings.get_tol)
    robust = serializers.BooleanField(default=False)

    class Meta:
        dataclass = FitOptions

    def validate_tol(self, value):
        if value <= 0:
            raise serializers.ValidationError('tol must be positive')
        return value


class BaselinePointSerializer(serializers.Serializer):
    t = serializers.IntegerField()
    increment = serializers.FloatField()
    cumulative = serializers.FloatField()


class CoefficientSerializer(serializers.Serializer):
    name = serializers.CharField()
    beta = serializers.FloatField()
    se = serializers.FloatField(allow_null=True)
    z = serializers.FloatField(allow_null=True)
    p_value = serializers.FloatField(allow_null=True)
    significant = serializers.BooleanField()
    robust_se = serializers.FloatField(required=False, allow_null=True)


class CoxFitSerializer(serializers.Serializer):
    """JSON form of a fitted model; ``save()`` rebuilds the CoxFit."""

    technique = serializers.ChoiceField(choices=Technique.choices)
    ties = serializers.ChoiceField(choices=Ties.CHOICES)
    schema = serializers.ListField(child=serializers.CharField(), allow_empty=True)
    coefficients = CoefficientSerializer(many=True)
    vcov = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()), allow_empty=True)
    robust_vcov = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()),
                                        required=False, allow_null=True)
    log_pl = serializers.FloatField()
    log_pl_null = serializers.FloatField(required=False, allow_null=True)
    aic = serializers.FloatField(read_only=True)
    n_events = serializers.IntegerField(min_value=0)
    n_spells = serializers.IntegerField(min_value=0)
    converged = serializers.BooleanField()
    iterations = serializers.IntegerField(min_value=0)
    message = serializers.CharField(allow_blank=True, default='')
    fixed = serializers.BooleanField(default=False)
    gradient_norm = serializers.FloatField(default=0.0)
    baseline = serializers.DictField(child=BaselinePointSerializer(many=True))

    def to_representation(self, fit: CoxFit):
        alpha = self.context.get('alpha', EngineSettings.get_significance_level())
        robust_se = fit.robust_se
        coefficients = []
        for j, name in enumerate(fit.schema):
            row = {
                'name': name,
                'beta': float(fit.beta[j]),
                'se': _finite(fit.se[j]),
                'z': _finite(fit.z[j]),
                'p_value': _finite(fit.p_values[j]),
                'significant': bool(fit.significant(alpha)[j]),
            }
            if robust_se is not None:
                row['robust_se'] = float(robust_se[j])
            coefficients.append(row)

        baseline = {}
        for key in sorted(fit.baseline):
            hazard = fit.baseline[key]
            baseline[str(key)] = [
                {'t': int(t), 'increment': float(h), 'cumulative': float(c)}
                for t, h, c in zip(hazard.times, hazard.increments, hazard.cumulative)
            ]

        data = {
            'technique': Technique(fit.technique).value,
            'ties': fit.ties,
            'schema': list(fit.schema),
            'coefficients': coefficients,
            'vcov': fit.vcov.tolist(),
            'log_pl': fit.log_pl,
            'log_pl_null': fit.log_pl_null,
            'aic': -2.0 * fit.log_pl + 2.0 * fit.p,
            'n_events': fit.n_events,
            'n_spells': fit.n_spells,
            'converged': fit.converged,
            'iterations': fit.iterations,
            'message': fit.message,
            'fixed': fit.fixed,
            'gradient_norm': fit.gradient_norm,
            'baseline': baseline,
        }
        if fit.robust_vcov is not None:
            data['robust_vcov'] = fit.robust_vcov.tolist()
        return data

    def validate(self, attrs):
        names = [row['name'] for row in attrs['coefficients']]
        if names != list(attrs['schema']):
            raise serializers.ValidationError('coefficient names must follow the schema order')
        p = len(names)
        if len(attrs['vcov']) != p or any(len(row) != p for row in attrs['vcov']):
            raise serializers.ValidationError(f'vcov must be {p}x{p}')
        for key in attrs['baseline']:
            try:
                int(key)
            except ValueError:
                raise serializers.ValidationError(f"baseline stratum key {key!r} is not an integer")
        return attrs

    def create(self, validated_data):
        baseline = {}
        for key, points in validated_data['baseline'].items():
            baseline[int(key)] = BaselineHazard(
                times=np.array([point['t'] for point in points], dtype=np.int64),
                increments=np.array([point['increment'] for point in points], dtype=float),
            )
        p = len(validated_data['schema'])
        robust = validated_data.get('robust_vcov')
        return CoxFit(
            technique=Technique(validated_data['technique']),
            schema=tuple(validated_data['schema']),
            beta=np.array([row['beta'] for row in validated_data['coefficients']], dtype=float),
            vcov=np.array(validated_data['vcov'], dtype=float).reshape(p, p),
            log_pl=validated_data['log_pl'],
            n_events=validated_data['n_events'],
            n_spells=validated_data['n_spells'],
            baseline=baseline,
            converged=validated_data['converged'],
            iterations=validated_data['iterations'],
            ties=validated_data['ties'],
            log_pl_null=validated_data.get('log_pl_null'),
            message=validated_data.get('message', ''),
            robust_vcov=None if robust is None else np.array(robust, dtype=float).reshape(p, p),
            fixed=validated_data.get('fixed', False),
            gradient_norm=validated_data.get('gradient_norm', 0.0),
            strata=tuple(sorted(baseline)),
        )


def _finite(value):
    value = float(value)
    return value if np.isfinite(value) else None
