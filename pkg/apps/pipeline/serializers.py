from pathlib import Path

from rest_framework import serializers

from apps.core.constants import LOAN_STATUS_STRATA
from apps.core.models import Technique
from apps.core.serializers import SchemaConfigSerializer
from apps.core.settings_manager import EngineSettings
from apps.cox.serializers import FitOptionsSerializer
from apps.diagnostics.models import KSMode, TROCVariant
from apps.diagnostics.serializers import TROCConfigSerializer
from apps.nonparametric.models import Denominator
from apps.synthgen.serializers import GeneratorSpecSerializer
from apps.utils.baseSerializers import DataclassSerializer

from .models import PipelineConfig

SUPPORTED_TECHNIQUES = ', '.join(Technique.values)


class PipelineConfigSerializer(DataclassSerializer):
    """Run configuration read from JSON or YAML.

    Relative ``panel`` paths resolve against ``context['base_dir']``.
    """

    technique = serializers.ChoiceField(
        choices=Technique.choices,
        error_messages={'invalid_choice': f'unknown technique "{{input}}"; supported: {SUPPORTED_TECHNIQUES}'},
    )
    panel = serializers.CharField(required=False, allow_null=True, default=None)
    schema = SchemaConfigSerializer(required=False, allow_null=True, default=None)
    generator = GeneratorSpecSerializer(required=False, allow_null=True, default=None)
    seed = serializers.IntegerField(min_value=0, default=0)
    train_fraction = serializers.FloatField(default=EngineSettings.get_train_fraction)
    strata_col = serializers.CharField(default=LOAN_STATUS_STRATA)
    covariates = serializers.ListField(child=serializers.CharField(), required=False, allow_null=True,
                                       default=None)
    fit = FitOptionsSerializer(required=False)
    troc = TROCConfigSerializer(required=False)
    troc_variant = serializers.ChoiceField(choices=TROCVariant.choices, default=TROCVariant.CLUSTERED)
    ks_mode = serializers.ChoiceField(choices=KSMode.choices, default=KSMode.ONE_SAMPLE)
    horizon = serializers.IntegerField(min_value=1, default=EngineSettings.get_term_structure_horizon)
    t1 = serializers.IntegerField(min_value=0, default=1)
    denominator = serializers.ChoiceField(choices=Denominator.choices, default=Denominator.ACTIVE)
    screen = serializers.BooleanField(default=True)
    threads = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)

    class Meta:
        dataclass = PipelineConfig

    def validate_train_fraction(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError('train_fraction must lie in (0, 1)')
        return value

    def validate(self, attrs):
        has_panel = attrs.get('panel') is not None
        has_generator = attrs.get('generator') is not None
        if has_panel == has_generator:
            raise serializers.ValidationError('give exactly one of "panel" or "generator"')
        if has_panel and attrs.get('schema') is None:
            raise serializers.ValidationError({'schema': 'a panel input needs its schema'})
        if attrs['t1'] >= attrs['horizon']:
            raise serializers.ValidationError({'t1': 't1 must be below the horizon'})
        return attrs

    def create(self, validated_data):
        data = dict(validated_data)
        base_dir = Path(self.context.get('base_dir', '.'))
        data['technique'] = Technique(data['technique'])
        data['troc_variant'] = TROCVariant(data['troc_variant'])
        data['ks_mode'] = KSMode(data['ks_mode'])
        data['denominator'] = Denominator(data['denominator'])
        if data.get('panel') is not None:
            panel = Path(data['panel'])
            data['panel'] = panel if panel.is_absolute() else base_dir / panel
        for key, nested in (('schema', SchemaConfigSerializer), ('generator', GeneratorSpecSerializer),
                            ('fit', FitOptionsSerializer), ('troc', TROCConfigSerializer)):
            if data.get(key) is not None:
                data[key] = nested().create(dict(data[key]))
            elif key in ('fit', 'troc'):
                data[key] = _defaults(nested)
        if data.get('covariates') is not None:
            data['covariates'] = tuple(data['covariates'])
        return PipelineConfig(**data)


def _defaults(serializer_class):
    serializer = serializer_class(data={})
    serializer.is_valid(raise_exception=True)
    return serializer.save()
