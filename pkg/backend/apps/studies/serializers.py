"""
Validation of the JSON run configuration.

Every section is a plain DRF Serializer; unknown keys are rejected at every
level and every bound is reported with the value it needs.
"""
from collections.abc import Mapping

from rest_framework import serializers

SCENARIOS = ('T1', 'T22', 'T222', 'xi1')
INIT_SELECTORS = ('coexistence', 'semitrivial', 'small', 'perturbed')


def positive(value):
    if not value > 0:
        raise serializers.ValidationError('Ensure this value is greater than 0.')


def greater_than_one(value):
    if not value > 1:
        raise serializers.ValidationError('Ensure this value is greater than 1.')


class StrictSerializer(serializers.Serializer):
    """Serializer that refuses keys it does not declare"""

    def to_internal_value(self, data):
        if isinstance(data, Mapping):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown field.'] for key in unknown})
        return super().to_internal_value(data)


class GridSerializer(StrictSerializer):
    n_x = serializers.IntegerField(min_value=3, default=64)
    n_a = serializers.IntegerField(min_value=1, default=128)
    a_m = serializers.FloatField(default=1.0, validators=[positive])


class ModelSerializer(StrictSerializer):
    alpha1 = serializers.FloatField(default=1.0, validators=[positive])
    alpha2 = serializers.FloatField(default=1.0, min_value=0.0)
    beta1 = serializers.FloatField(default=1.0, validators=[positive])
    beta2 = serializers.FloatField(default=0.03, min_value=0.0)
    gamma = serializers.FloatField(default=0.5, min_value=0.0)


class BirthSerializer(StrictSerializer):
    shape = serializers.ChoiceField(choices=['constant', 'ramp', 'custom'], default='constant')
    path = serializers.CharField(required=False, allow_null=True, default=None)
    scale = serializers.FloatField(default=1.0, validators=[positive])

    def validate(self, attrs):
        if attrs['shape'] == 'custom' and not attrs.get('path'):
            raise serializers.ValidationError({'path': 'A custom birth shape needs a CSV path (age,value).'})
        return attrs


class SolverSerializer(StrictSerializer):
    step_tol = serializers.FloatField(default=1e-12, validators=[positive])
    step_max_iter = serializers.IntegerField(min_value=1, default=20)
    diffusion_floor = serializers.FloatField(default=0.5, max_value=1.0, validators=[positive])
    shooting_tol = serializers.FloatField(default=1e-10, validators=[positive])
    shooting_max_iter = serializers.IntegerField(min_value=1, default=50)
    power_tol = serializers.FloatField(default=1e-12, validators=[positive])
    power_max_iter = serializers.IntegerField(min_value=1, default=100000)


class XiScanSerializer(StrictSerializer):
    start = serializers.FloatField(default=1.1, validators=[greater_than_one])
    stop = serializers.FloatField(default=4.0)
    num = serializers.IntegerField(min_value=2, default=30)

    def validate(self, attrs):
        if not attrs['stop'] > attrs['start']:
            raise serializers.ValidationError({'stop': 'Ensure stop is greater than start.'})
        return attrs


class RangesSerializer(StrictSerializer):
    eta = serializers.ListField(child=serializers.FloatField(validators=[positive]),
                                default=[1.2, 1.5, 2.0, 3.0], allow_empty=False)
    xi = serializers.ListField(child=serializers.FloatField(validators=[positive]),
                               default=[1.5, 2.0, 3.0], allow_empty=False)
    eta_max = serializers.FloatField(default=1000.0, validators=[greater_than_one])
    xi_scan = XiScanSerializer(required=False)

    def to_internal_value(self, data):
        if isinstance(data, Mapping) and 'xi_scan' not in data:
            data = {**data, 'xi_scan': {}}
        return super().to_internal_value(data)


class StudySerializer(StrictSerializer):
    eta = serializers.FloatField(default=2.0, validators=[positive])
    xi = serializers.FloatField(default=2.0, validators=[positive])


class ContinuationSerializer(StrictSerializer):
    s0 = serializers.FloatField(allow_null=True, default=None, validators=[positive])
    h_min = serializers.FloatField(default=1e-4, validators=[positive])
    h_max = serializers.FloatField(default=0.25, validators=[positive])
    norm_cap = serializers.FloatField(default=1e3, validators=[positive])
    pos_tol = serializers.FloatField(default=1e-8, validators=[positive])
    max_steps = serializers.IntegerField(min_value=1, default=400)
    mu_min = serializers.FloatField(allow_null=True, default=None)
    mu_max = serializers.FloatField(allow_null=True, default=None)

    def validate(self, attrs):
        if attrs['h_min'] > attrs['h_max']:
            raise serializers.ValidationError({'h_min': 'Ensure h_min is less than or equal to h_max.'})
        if attrs['mu_min'] is not None and attrs['mu_max'] is not None and not attrs['mu_min'] < attrs['mu_max']:
            raise serializers.ValidationError({'mu_min': 'Ensure mu_min is less than mu_max.'})
        return attrs


class SimulateSerializer(StrictSerializer):
    t_end = serializers.FloatField(default=5.0, validators=[positive])
    init = serializers.ChoiceField(choices=list(INIT_SELECTORS), default='coexistence')
    perturbation = serializers.FloatField(default=1.05, validators=[positive])
    sample_every = serializers.IntegerField(min_value=1, default=1)
    branch_steps = serializers.IntegerField(min_value=2, default=20)


class OutputSerializer(StrictSerializer):
    directory = serializers.CharField(allow_null=True, default=None)


class RunConfigSerializer(StrictSerializer):
    """Top-level run configuration; omitted sections take their defaults"""

    SECTIONS = ('grid', 'model', 'birth', 'solver', 'ranges', 'study', 'continuation', 'simulate', 'output')

    grid = GridSerializer(required=False)
    model = ModelSerializer(required=False)
    birth = BirthSerializer(required=False)
    solver = SolverSerializer(required=False)
    ranges = RangesSerializer(required=False)
    study = StudySerializer(required=False)
    continuation = ContinuationSerializer(required=False)
    simulate = SimulateSerializer(required=False)
    output = OutputSerializer(required=False)
    seed = serializers.IntegerField(default=0, min_value=0)

    def to_internal_value(self, data):
        if isinstance(data, Mapping):
            data = {**{name: {} for name in self.SECTIONS}, **data}
        return super().to_internal_value(data)
