import numpy as np
from rest_framework import serializers

from .choices import TABLE_ORDER, CoefficientRule, Covariance, Method
from .estimators import EstimatorConfig
from .exceptions import ConfigError
from .models import RunManifest
from .simulation import DgpConfig, McConfig


def _flatten(errors, prefix=""):
    if isinstance(errors, dict):
        for key, value in errors.items():
            yield from _flatten(value, f"{prefix}{key}.")
    elif isinstance(errors, list):
        for value in errors:
            yield from _flatten(value, prefix)
    else:
        yield f"{prefix.rstrip('.')}: {errors}"


def validated(serializer_class, data):
    """Validate ``data`` and build its domain object; failures become ConfigError."""
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise ConfigError("; ".join(_flatten(serializer.errors)))
    return serializer.save()


class EstimatorConfigSerializer(serializers.Serializer):
    var_cutoff = serializers.FloatField(min_value=0, max_value=1, required=False)
    k_max = serializers.IntegerField(min_value=1, allow_null=True, required=False)
    coefficient_rule = serializers.ChoiceField(CoefficientRule.choices, required=False)
    probability_floor = serializers.FloatField(min_value=0, max_value=1, required=False)
    bandwidth_factors = serializers.ListField(
        child=serializers.FloatField(min_value=0), min_length=1, required=False
    )
    lasso_lambdas = serializers.IntegerField(min_value=2, required=False)
    lasso_lambda_ratio = serializers.FloatField(min_value=0, max_value=1, required=False)
    lasso_folds = serializers.IntegerField(min_value=2, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)

    def validate_var_cutoff(self, value):
        if value <= 0:
            raise serializers.ValidationError("Must be positive.")
        return value

    def create(self, validated_data):
        if "bandwidth_factors" in validated_data:
            validated_data["bandwidth_factors"] = tuple(validated_data["bandwidth_factors"])
        return EstimatorConfig.from_settings(**validated_data)


class DgpConfigSerializer(serializers.Serializer):
    beta_id = serializers.ChoiceField([1, 2, 3])
    delta = serializers.FloatField(min_value=0, default=0.0)
    eta = serializers.FloatField(allow_null=True, default=1.0)
    n = serializers.IntegerField(min_value=10, default=100)
    grid_points = serializers.IntegerField(min_value=3, default=201)
    sigma_eps = serializers.FloatField(min_value=0, default=0.1)
    seed = serializers.IntegerField(min_value=0, default=0)
    covariance = serializers.ChoiceField(Covariance.choices, default=Covariance.STATIONARY)

    def validate_eta(self, value):
        if value is not None and value <= 0:
            raise serializers.ValidationError("Must be positive, or null for no missingness.")
        return value

    def create(self, validated_data):
        return DgpConfig(**validated_data)


class McConfigSerializer(serializers.Serializer):
    seed = serializers.IntegerField(min_value=0)
    beta_ids = serializers.ListField(child=serializers.ChoiceField([1, 2, 3]), min_length=1, default=[1])
    etas = serializers.ListField(
        child=serializers.FloatField(allow_null=True), min_length=1, default=[1.0]
    )
    sizes = serializers.ListField(child=serializers.IntegerField(min_value=10), min_length=1, default=[100])
    deltas = serializers.ListField(child=serializers.FloatField(min_value=0), min_length=1, default=[0.0])
    replications = serializers.IntegerField(min_value=1, default=200)
    bootstrap = serializers.IntegerField(min_value=1, default=500)
    alpha = serializers.FloatField(min_value=0, max_value=1, default=0.05)
    methods = serializers.ListField(
        child=serializers.ChoiceField(Method.choices), min_length=1, default=list(TABLE_ORDER)
    )
    grid_points = serializers.IntegerField(min_value=3, default=201)
    sigma_eps = serializers.FloatField(min_value=0, default=0.1)
    covariance = serializers.ChoiceField(Covariance.choices, default=Covariance.STATIONARY)
    test = serializers.BooleanField(default=True)
    estimator = EstimatorConfigSerializer(required=False)

    def validate_etas(self, value):
        if any(eta is not None and eta <= 0 for eta in value):
            raise serializers.ValidationError("Every eta must be positive or null.")
        return value

    def validate_methods(self, value):
        # Table order, no duplicates.
        return [method for method in TABLE_ORDER if method in value]

    def create(self, validated_data):
        estimator = EstimatorConfigSerializer().create(dict(validated_data.pop("estimator", {})))
        for key in ("beta_ids", "etas", "sizes", "deltas", "methods"):
            validated_data[key] = tuple(validated_data[key])
        return McConfig(estimator=estimator, **validated_data)


class FunctionalSlopeSerializer(serializers.Serializer):
    method_tag = serializers.CharField()
    indices = serializers.ListField(child=serializers.IntegerField(), source="indices_one_based")
    coefficients = serializers.ListField(child=serializers.FloatField())
    intercept = serializers.FloatField()
    grid = serializers.ListField(child=serializers.FloatField(), source="basis.grid.points")
    curve = serializers.ListField(child=serializers.FloatField())
    k_max = serializers.IntegerField(source="basis.k_max")
    eigenvalues = serializers.ListField(child=serializers.FloatField(), source="basis.eigenvalues")
    explained_variance_ratio = serializers.ListField(
        child=serializers.FloatField(), source="basis.explained_variance_ratio"
    )
    first_stage_indices = serializers.SerializerMethodField()
    tuning = serializers.JSONField()
    cv_trace = serializers.JSONField()

    def get_first_stage_indices(self, slope):
        first = slope.selection.first
        return None if first is None else [k + 1 for k in first]


class GofResultSerializer(serializers.Serializer):
    method_tag = serializers.CharField()
    statistic = serializers.FloatField()
    p_value = serializers.FloatField()
    bootstrap = serializers.IntegerField()
    bootstrap_statistics = serializers.ListField(child=serializers.FloatField())
    indices = serializers.ListField(child=serializers.IntegerField(), source="indices_one_based")
    seed = serializers.IntegerField()
    n_s = serializers.IntegerField()
    retries = serializers.IntegerField()


class SignTestSerializer(serializers.Serializer):
    n_less = serializers.IntegerField()
    n = serializers.IntegerField()
    p_value = serializers.FloatField()


class CellSummarySerializer(serializers.Serializer):
    beta_id = serializers.IntegerField(source="dgp.beta_id")
    eta = serializers.FloatField(source="dgp.eta", allow_null=True)
    n = serializers.IntegerField(source="dgp.n")
    delta = serializers.FloatField(source="dgp.delta")
    rejection = serializers.DictField(child=serializers.FloatField(allow_null=True))
    failures = serializers.DictField(child=serializers.IntegerField())
    msee = serializers.SerializerMethodField()
    comparisons = serializers.DictField(child=SignTestSerializer())

    def get_msee(self, cell):
        return {
            method: {
                "mean": float(np.mean(values)),
                "median": float(np.median(values)),
                "count": len(values),
            }
            for method, values in cell.msee.items()
            if values
        }


class CellTimingSerializer(serializers.Serializer):
    beta_id = serializers.IntegerField(source="dgp.beta_id")
    eta = serializers.FloatField(source="dgp.eta", allow_null=True)
    n = serializers.IntegerField(source="dgp.n")
    delta = serializers.FloatField(source="dgp.delta")
    fit_time = serializers.SerializerMethodField()

    def get_fit_time(self, cell):
        return {
            method: {"mean": float(np.mean(values)), "median": float(np.median(values))}
            for method, values in cell.fit_time.items()
            if values
        }


class McReportSerializer(serializers.Serializer):
    config = McConfigSerializer()
    replications = serializers.IntegerField()
    bootstrap = serializers.IntegerField()
    cells = CellSummarySerializer(many=True)


class RunManifestSerializer(serializers.ModelSerializer):
    class Meta:
        model = RunManifest
        fields = [
            "id",
            "command",
            "config",
            "seed",
            "version",
            "input_digests",
            "outputs",
            "wall_time",
            "created_at",
        ]
