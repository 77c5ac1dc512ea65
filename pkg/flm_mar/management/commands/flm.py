import argparse

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from flm_mar.choices import TABLE_ORDER, CoefficientRule, Covariance
from flm_mar.exceptions import FlmError
from flm_mar.ingest import read_json
from flm_mar.services import execute, replay


def _optional_float(value):
    if value.strip().lower() in ("none", "null"):
        return None
    return float(value)


def _float_list(value):
    return [_optional_float(token) for token in value.split(",") if token.strip()]


def _int_list(value):
    return [int(token) for token in value.split(",") if token.strip()]


def _method_list(value):
    if value == "all":
        return list(TABLE_ORDER)
    return [token.strip() for token in value.split(",") if token.strip()]


def _positive_int(value):
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return number


class Command(BaseCommand):
    help = "Functional linear regression with responses missing at random: simulate, fit, test, mc, replay."

    def add_estimator_arguments(self, parser):
        parser.add_argument("--kmax-var-cutoff", type=float, dest="var_cutoff")
        parser.add_argument("--kmax", type=_positive_int, dest="k_max")
        parser.add_argument("--coefficient-rule", choices=CoefficientRule.values)
        parser.add_argument("--no-plots", action="store_false", dest="plots")

    def add_data_arguments(self, parser):
        parser.add_argument("--curves", required=True)
        parser.add_argument("--responses", required=True)
        parser.add_argument("--method", required=True, choices=[*TABLE_ORDER, "all"])
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--out", required=True)

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest="subcommand", required=True)

        simulate = subparsers.add_parser("simulate", help="Write curves.csv, responses.csv and truth.json.")
        simulate.add_argument("--config", help="JSON file with DGP settings; flags override it.")
        simulate.add_argument("--beta", type=int, choices=[1, 2, 3], dest="beta_id")
        simulate.add_argument("--delta", type=float)
        simulate.add_argument("--eta", type=_optional_float, default=argparse.SUPPRESS)
        simulate.add_argument("--n", type=int)
        simulate.add_argument("--grid-points", type=int)
        simulate.add_argument("--sigma-eps", type=float)
        simulate.add_argument("--covariance", choices=Covariance.values)
        simulate.add_argument("--seed", type=int)
        simulate.add_argument("--out", required=True)

        fit = subparsers.add_parser("fit", help="Estimate the functional slope.")
        self.add_data_arguments(fit)
        self.add_estimator_arguments(fit)

        test = subparsers.add_parser("test", help="Wild-bootstrap PCvM test of linearity.")
        self.add_data_arguments(test)
        self.add_estimator_arguments(test)
        test.add_argument("--bootstrap", type=_positive_int)
        test.add_argument("--alpha", type=float)
        test.add_argument("--threads", type=_positive_int)

        mc = subparsers.add_parser("mc", help="Monte Carlo rejection, MSEE and timing study.")
        mc.add_argument("--config", help="JSON file with the experiment grid; flags override it.")
        mc.add_argument("--seed", type=int)
        mc.add_argument("--beta", type=_int_list, dest="beta_ids")
        mc.add_argument("--eta", type=_float_list, dest="etas")
        mc.add_argument("--n", type=_int_list, dest="sizes")
        mc.add_argument("--delta", type=_float_list, dest="deltas")
        mc.add_argument("--method", type=_method_list, dest="methods")
        mc.add_argument("--replications", type=_positive_int)
        mc.add_argument("--bootstrap", type=_positive_int)
        mc.add_argument("--alpha", type=float)
        mc.add_argument("--no-test", action="store_false", dest="test", default=None)
        mc.add_argument("--full-scale", action="store_true")
        mc.add_argument("--threads", type=_positive_int)
        mc.add_argument("--out", required=True)
        self.add_estimator_arguments(mc)

        replay_parser = subparsers.add_parser("replay", help="Re-run the command recorded in a manifest.")
        replay_parser.add_argument("manifest")
        replay_parser.add_argument("--out")

    def handle(self, *args, **options):
        subcommand = options["subcommand"]
        try:
            if subcommand == "replay":
                manifest = replay(options["manifest"], out=options.get("out"))
            else:
                builder = getattr(self, f"{subcommand}_options")
                manifest = execute(subcommand, builder(options))
        except FlmError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        self.stdout.write(self.style.SUCCESS(f"{manifest.command} finished in {manifest.wall_time:.2f}s"))
        for path in manifest.outputs:
            self.stdout.write(path)

    @staticmethod
    def _picked(options, keys):
        return {key: options[key] for key in keys if options.get(key) is not None}

    def _estimator(self, options):
        return self._picked(options, ("var_cutoff", "k_max", "coefficient_rule"))

    def simulate_options(self, options):
        dgp = read_json(options["config"]) if options.get("config") else {}
        dgp.update(self._picked(options, ("beta_id", "delta", "n", "grid_points", "sigma_eps", "covariance", "seed")))
        if "eta" in options:
            dgp["eta"] = options["eta"]
        return {"dgp": dgp, "out": options["out"]}

    def fit_options(self, options):
        return {
            "curves": options["curves"],
            "responses": options["responses"],
            "method": options["method"],
            "out": options["out"],
            "seed": options["seed"],
            "estimator": self._estimator(options),
            "plots": options["plots"],
        }

    def test_options(self, options):
        return {
            **self.fit_options(options),
            **self._picked(options, ("bootstrap", "alpha")),
            "threads": options.get("threads") or settings.FLM["THREADS"],
        }

    def mc_options(self, options):
        config = read_json(options["config"]) if options.get("config") else {}
        config.update(
            self._picked(
                options,
                ("seed", "beta_ids", "etas", "sizes", "deltas", "methods", "replications", "bootstrap", "alpha", "test"),
            )
        )
        estimator = {**config.get("estimator", {}), **self._estimator(options)}
        if estimator:
            config["estimator"] = estimator
        return {
            "config": config,
            "out": options["out"],
            "threads": options.get("threads") or settings.FLM["THREADS"],
            "full_scale": options["full_scale"],
            "plots": options["plots"],
        }
