from django.db import models


class Method(models.TextChoices):
    COMPLETE = "C", "Complete-data FPC"
    COMPLETE_LASSO = "CL", "Complete-data LASSO-selected"
    SIMPLIFIED = "S", "Simplified"
    SIMPLIFIED_LASSO = "SL", "Simplified LASSO-selected"
    IMPUTED = "I", "Imputed"
    IMPUTED_LASSO = "IL", "Imputed LASSO-selected"
    IPW = "W", "Inverse probability weighted"
    IPW_LASSO = "WL", "Inverse probability weighted LASSO-selected"


# Column order of the rejection tables.
TABLE_ORDER = ("C", "CL", "S", "SL", "I", "IL", "W", "WL")
MAR_METHODS = ("S", "SL", "I", "IL", "W", "WL")
COMPLETE_METHODS = ("C", "CL")
LASSO_METHODS = ("CL", "SL", "IL", "WL")
IMPUTING_METHODS = ("I", "IL", "W", "WL")
WEIGHTED_METHODS = ("W", "WL")


class CoefficientRule(models.TextChoices):
    VERBATIM = "verbatim", "Orthogonal-score formula"
    LEAST_SQUARES = "least_squares", "Least squares with intercept"


class Covariance(models.TextChoices):
    STATIONARY = "stationary", "Stationary Ornstein-Uhlenbeck"
    ANCHORED = "anchored", "Anchored at zero"


class Command(models.TextChoices):
    SIMULATE = "simulate", "Simulate a dataset"
    FIT = "fit", "Fit a slope"
    TEST = "test", "Test linearity"
    MC = "mc", "Monte Carlo experiment"
