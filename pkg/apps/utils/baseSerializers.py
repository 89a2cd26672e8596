import dataclasses

from rest_framework import serializers


class DataclassSerializer(serializers.Serializer):
    """Base serializer for validating plain-data configs into frozen dataclasses.

    Subclasses declare their fields and ``Meta.dataclass``; ``save()`` then
    returns the dataclass instance built from ``validated_data``.
    """

    class Meta:
        abstract = True
        dataclass = None

    def _target(self):
        target = getattr(self.Meta, 'dataclass', None)
        if target is None:
            raise NotImplementedError(f"{type(self).__name__}.Meta.dataclass must be defined")
        return target

    def to_representation(self, instance):
        """Serialize a dataclass instance, dropping unset optional values."""
        data = super().to_representation(instance)
        return {key: value for key, value in data.items() if value is not None}

    def create(self, validated_data):
        target = self._target()
        names = {f.name for f in dataclasses.fields(target)}
        return target(**{key: value for key, value in validated_data.items() if key in names})

    def update(self, instance, validated_data):
        return dataclasses.replace(instance, **validated_data)


def load_validated(serializer_class, data, **kwargs):
    """Validate ``data`` and return the built object; raises ``ValidationError``."""
    serializer = serializer_class(data=data, **kwargs)
    serializer.is_valid(raise_exception=True)
    return serializer.save()
