"""
Validation of flat ``KEY=value`` configuration files.

Files are read with python-dotenv and validated with DRF serializers; the first
field error is raised as a ConfigError naming the offending key.
"""

from pathlib import Path

from django.conf import settings
from dotenv import dotenv_values
from rest_framework import serializers

from .detect import parse_detector
from .exceptions import ConfigError, LcraError
from .harness import SWEEP_VARIABLES, ExperimentSpec
from .model import SYMBOL_MODELS, SystemConfig

SYSTEM_KEYS = ('K', 'Q', 'N', 'T', 'rho', 'gamma_target', 'eta', 'n0', 'seed', 'symbol_model')
EXPERIMENT_KEYS = ('sweep', 'values', 'trials', 'detector', 'known_b', 'out')


class FloatListField(serializers.Field):
    """A comma-separated list of floats (or a single float)."""

    default_error_messages = {
        'invalid': 'Expected a comma-separated list of numbers.',
        'empty': 'At least one value is required.',
    }

    def to_internal_value(self, data):
        if isinstance(data, (int, float)):
            return (float(data),)
        items = data if isinstance(data, (list, tuple)) else str(data).split(',')
        try:
            values = tuple(float(item) for item in items if str(item).strip())
        except ValueError:
            self.fail('invalid')
        if not values:
            self.fail('empty')
        return values

    def to_representation(self, value):
        return ','.join(repr(float(v)) for v in value)


class ProbabilityListField(FloatListField):

    def to_internal_value(self, data):
        values = super().to_internal_value(data)
        if any(not 0.0 <= v < 1.0 for v in values):
            raise serializers.ValidationError('Access probabilities must lie in [0, 1).')
        return values


class SystemConfigSerializer(serializers.Serializer):
    K = serializers.IntegerField(min_value=1, default=300)
    Q = serializers.IntegerField(min_value=1, default=3)
    N = serializers.IntegerField(min_value=1, default=30)
    T = serializers.IntegerField(min_value=1, default=100)
    rho = ProbabilityListField(default=(0.05,))
    gamma_target = serializers.FloatField(default=4.0)
    eta = serializers.FloatField(min_value=2.0, default=3.5)
    n0 = serializers.FloatField(default=1.0)
    seed = serializers.IntegerField(min_value=0, max_value=2 ** 64 - 1, default=0)
    symbol_model = serializers.ChoiceField(choices=SYMBOL_MODELS, default='gaussian')

    def validate_gamma_target(self, value):
        if value <= 0:
            raise serializers.ValidationError('Target SNR must be positive.')
        return value

    def validate_n0(self, value):
        if value <= 0:
            raise serializers.ValidationError('Noise power must be positive.')
        return value

    def validate(self, attrs):
        if attrs['K'] % attrs['Q']:
            raise serializers.ValidationError({'Q': 'K must be divisible by Q.'})
        if len(attrs['rho']) not in (1, attrs['Q']):
            raise serializers.ValidationError({'rho': f"Expected 1 or {attrs['Q']} values."})
        return attrs

    def create(self, validated_data):
        return SystemConfig(**validated_data)


class ExperimentSpecSerializer(serializers.Serializer):
    sweep = serializers.ChoiceField(choices=SWEEP_VARIABLES)
    values = FloatListField()
    trials = serializers.IntegerField(min_value=1, required=False)
    detector = serializers.CharField(required=False)
    known_b = serializers.BooleanField(default=True)
    out = serializers.CharField(required=False, allow_blank=True)

    def validate_detector(self, value):
        try:
            return parse_detector(value)
        except LcraError as exc:
            raise serializers.ValidationError(str(exc))

    def create(self, validated_data):
        defaults = settings.LCRA
        out = validated_data.get('out')
        return ExperimentSpec(
            config=self.context['config'],
            sweep=validated_data['sweep'],
            values=validated_data['values'],
            n_trials=validated_data.get('trials', defaults['DEFAULT_TRIALS']),
            detector=validated_data.get('detector')
            or parse_detector(defaults['DEFAULT_DETECTOR']),
            known_b=validated_data['known_b'],
            out=Path(out) if out else None,
        )


def _first_error(errors):
    key, messages = next(iter(errors.items()))
    if key == 'non_field_errors':
        key = 'config'
    message = messages[0] if isinstance(messages, list) else messages
    return ConfigError(key, str(message))


def _save(serializer):
    if not serializer.is_valid():
        raise _first_error(serializer.errors)
    return serializer.save()


def read_config_file(path):
    """Key-value pairs of a configuration file; unknown keys are rejected."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError('config', f"no such file: {path}")
    values = dotenv_values(path)
    for key in values:
        if key not in SYSTEM_KEYS and key not in EXPERIMENT_KEYS:
            raise ConfigError(key, "unknown configuration key")
    return values


def build_system_config(values, **overrides):
    data = {key: value for key, value in values.items()
            if key in SYSTEM_KEYS and value is not None}
    data.update({key: value for key, value in overrides.items() if value is not None})
    return _save(SystemConfigSerializer(data=data))


def build_experiment_spec(values, config, **overrides):
    data = {key: value for key, value in values.items()
            if key in EXPERIMENT_KEYS and value is not None}
    data.update({key: value for key, value in overrides.items() if value is not None})
    if 'sweep' not in data:
        raise ConfigError('sweep', "a sweep configuration needs a 'sweep' key")
    return _save(ExperimentSpecSerializer(data=data, context={'config': config}))


def load_system_config(path=None, **overrides):
    """SystemConfig from an optional file; keyword overrides win over file values."""
    values = read_config_file(path) if path else {}
    return build_system_config(values, **overrides)
