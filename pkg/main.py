import argparse
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from config import Config
from data.dataset import load_dataset, save_dataset
from data.normalizer import fit_normalizer
from data.partition import partition, region_spec, split_group
from data.synthetic import generate_synthetic
from database.models import (ArchitectureSpec, CalibrationSettings, DivergenceSettings, Estimator,
                             ExperimentPlan, NormalizationMode, PartitionSpec, ProxyStudyPlan,
                             SplitSettings, SyntheticConfig, TrainConfig)
from database.record_store import RecordStore, read_records
from emulators.checkpoint import save_mlp
from emulators.training import TrainData, train
from graph.experiment_graph import run_matrix
from harness.model_runner import require_radiation_targets
from harness.proxy_study import proxy_study
from harness.robustness import GROUPINGS, build_report
from harness.shift_scan import decade_shift_scan, default_permutations
from physics.calibration import calibrate
from physics.params import PhysicalParams
from physics.radiation import TARGET_NAMES, RadiationInputs
from shift_analysis.divergence import energy_distance, knn_kl, median_heuristic_bandwidth, mmd_rbf
from shift_analysis.pca import pca_fit, pca_project
from shift_analysis.stat_tests import divergence_test
from utils.errors import PlanValidationError, ValidationError, exit_code_for
from utils.logger import logger

STATISTICS = {"ed": Estimator.ED, "mmd": Estimator.MMD2, "kl": Estimator.KL}


def parse_interval(text: str):
    """'1979-1988' -> (1979, 1988)"""
    try:
        start, end = (int(part) for part in text.split("-"))
    except ValueError:
        raise ValidationError(f"Year interval must look like 1979-1988, got '{text}'") from None
    return start, end


def load_toml(path) -> dict:
    try:
        with open(path, 'rb') as f:
            return tomllib.load(f)
    except FileNotFoundError:
        raise PlanValidationError(f"Config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise PlanValidationError(f"Invalid TOML in {path}: {e}")


class ShiftLabCli:
    """Command-line front end of the shift laboratory"""

    def __init__(self, args: argparse.Namespace):
        self.args = args

    # Shared helpers

    def _config(self) -> dict:
        return load_toml(self.args.config) if self.args.config else {}

    def _with_sources(self, section: dict) -> dict:
        """Plan section with --data/--manifest/--workers overrides applied"""
        section = dict(section)
        for key in ('data', 'manifest'):
            if getattr(self.args, key):
                section[key] = getattr(self.args, key)
        if self.args.workers:
            section['workers'] = self.args.workers
        return section

    def _dataset(self, data=None, manifest=None):
        data = data or self.args.data
        manifest = manifest or self.args.manifest
        if not data or not manifest:
            raise ValidationError("--data and --manifest are required")
        return load_dataset(data, manifest)

    def _store(self) -> RecordStore:
        return RecordStore(self.args.out)

    def _seed(self, default: int = 0) -> int:
        return default if self.args.seed is None else self.args.seed

    def _partition_spec(self) -> PartitionSpec:
        section = self._config().get('partition')
        if section is not None:
            return PartitionSpec(**section)
        temporal = "years" if self.args.years else ("season" if self.args.season else "all")
        intervals = [parse_interval(t) for t in self.args.years or []]
        if self.args.region:
            return region_spec(self.args.region, temporal, year_intervals=intervals)
        return PartitionSpec(temporal=temporal, year_intervals=intervals)

    def _two_groups(self, ds):
        """Feature matrices of --groups A B, normalised as requested"""
        groups = partition(ds, self._partition_spec())
        first, second = self.args.groups
        for name in (first, second):
            if name not in groups:
                raise ValidationError(f"Unknown group '{name}', expected one of {', '.join(groups)}")
            if groups[name].size == 0:
                raise ValidationError(f"Group '{name}' is empty")
        mode = NormalizationMode(self.args.normalization)
        fit_idx = groups[first] if mode == NormalizationMode.TRAIN_ONLY else np.arange(ds.n_samples)
        normalizer = fit_normalizer(ds, fit_idx)
        return (normalizer.transform_features(ds.features[groups[first]]),
                normalizer.transform_features(ds.features[groups[second]]))

    def _settings(self) -> DivergenceSettings:
        return DivergenceSettings(pair_budget=self.args.pair_budget, seed=self._seed(),
                                  k=self.args.k, pca_components=Config.PCA_COMPONENTS,
                                  median_subsample=Config.MEDIAN_SUBSAMPLE)

    # Subcommands

    def ingest(self):
        """Validate a dataset and summarise it"""
        ds = self._dataset()
        summary = {
            "samples": ds.n_samples,
            "times": len(ds.time_ids),
            "cells": len(ds.cells),
            "features": list(ds.feature_names),
            "targets": list(ds.target_names),
            "log_columns": list(ds.log_columns),
            "content_hash": ds.content_hash(),
        }
        self._store().write_report(summary, "summary.json")
        logger.info(f"Dataset valid: {ds.n_samples} samples")

    def partition(self):
        """Group sizes under a partition rule"""
        ds = self._dataset()
        groups = partition(ds, self._partition_spec())
        sizes = {key: int(idx.size) for key, idx in groups.items()}
        self._store().write_report({"groups": sizes}, "partition.json")
        for key, size in sizes.items():
            print(f"{key}\t{size}")

    def shift(self):
        """Divergences between two groups, or the decade scan"""
        ds = self._dataset()
        settings = self._settings()
        if self.args.scan:
            rows = decade_shift_scan(
                ds, parse_interval(self.args.reference), [parse_interval(t) for t in self.args.compare],
                settings, NormalizationMode(self.args.normalization), self._seed(),
                permutations={kind: self.args.permutations or default_permutations(kind) for kind in Estimator},
                workers=self.args.workers or Config.WORKERS,
            )
            self._store().write_report({"shift_scan": [r.model_dump(mode='json') for r in rows]}, "shift.json")
            return

        X, Y = self._two_groups(ds)
        bandwidth = median_heuristic_bandwidth(X, settings.median_subsample, settings.seed)
        model = pca_fit(X, settings.pca_components)
        estimates = {
            "ED": energy_distance(X, Y, settings.pair_budget, settings.seed),
            "MMD2": mmd_rbf(X, Y, bandwidth, settings.pair_budget, settings.seed),
            "KL": knn_kl(pca_project(model, X), pca_project(model, Y), settings.k),
        }
        for name, estimate in estimates.items():
            print(f"{name}\t{estimate.value:.12g}")
        self._store().write_report({k: v.model_dump(mode='json') for k, v in estimates.items()}, "shift.json")

    def permtest(self):
        """Two-sample permutation test between two groups"""
        ds = self._dataset()
        X, Y = self._two_groups(ds)
        kind = STATISTICS[self.args.statistic]
        B = self.args.permutations or default_permutations(kind)
        result = divergence_test(X, Y, kind, self._settings(), B, self._seed(),
                                 workers=self.args.workers or Config.WORKERS)
        print(f"observed {result.observed:.12g}\tp {result.p_value:.6g}")
        self._store().write_report(result.model_dump(mode='json'), "permtest.json")

    def train(self):
        """Train one MLP on one group's training split"""
        ds = self._dataset()
        config = self._config()
        if 'mlp' not in config or 'training' not in config:
            raise PlanValidationError("train needs [mlp] and [training] sections")
        groups = partition(ds, self._partition_spec())
        group = self.args.group or next(iter(groups))
        if group not in groups:
            raise ValidationError(f"Unknown group '{group}'")
        split_cfg = SplitSettings(**config.get('split', {}))
        split = split_group(ds, groups[group], split_cfg.val_fraction, split_cfg.test_fraction)
        normalizer = fit_normalizer(ds, split.train, config.get('log_columns'))

        train_cfg = TrainConfig(**config['training'])
        if self.args.seed is not None:
            train_cfg = train_cfg.model_copy(update={"seed": self.args.seed})
        mlp_cfg = ArchitectureSpec(**config['mlp']).with_dims(ds.d_in, ds.d_out)
        data = TrainData(
            X_train=normalizer.transform_features(ds.features[split.train]),
            Y_train=normalizer.transform_targets(ds.targets[split.train]),
            X_val=normalizer.transform_features(ds.features[split.val]),
            Y_val=normalizer.transform_targets(ds.targets[split.val]),
        )
        model, record = train(data, mlp_cfg, train_cfg, group)

        store = self._store()
        save_mlp(model, store.out_dir / "model.mlp")
        payload = record.model_dump(mode='json')
        payload["normalizer_hash"] = normalizer.statistics_hash()
        store.write_report(payload, "train_record.json")

    def sweep(self):
        """Seasonal-proxy study"""
        plan = ProxyStudyPlan(**self._with_sources(self._config()))
        ds = self._dataset(plan.data, plan.manifest)
        result = proxy_study(ds, plan.first, plan.second, plan.n_architectures, self._seed(plan.seed),
                             plan.percentile, plan.space, plan.val_fraction, plan.workers)
        store = self._store()
        store.write_report(result.model_dump(mode='json'))
        store.write_plotdata("proxy", [row.model_dump(exclude={'config'}) for row in result.rows])

    def calibrate(self):
        """Staged calibration of the physical parameters on a dataset"""
        ds = self._dataset()
        require_radiation_targets(ds)
        settings = CalibrationSettings(**self._config().get('calibration', {}))
        p0 = PhysicalParams.load(self.args.params) if self.args.params else PhysicalParams.defaults()
        inputs = RadiationInputs.from_matrix(ds.features, ds.feature_names).check_valid()
        result = calibrate(inputs, ds.columns(list(TARGET_NAMES)), p0, settings.stages,
                           settings.tol, settings.max_iter)
        store = self._store()
        PhysicalParams(result.parameters).save(store.out_dir / "params.json")
        store.write_report(result.model_dump(mode='json'), "calibration.json")

    def matrix(self):
        """Robustness matrix"""
        plan = ExperimentPlan(**self._with_sources(self._config()))
        ds = self._dataset(plan.data, plan.manifest)
        run_matrix(plan, ds, self._store())

    def report(self):
        """Regressions from an existing records.csv"""
        store = self._store()
        records = read_records(self.args.records or store.out_dir / "records.csv")
        report, plotdata = build_report(records, self.args.groupings or GROUPINGS, self.args.include_diagonal)
        store.write_report(report)
        for grouping, rows in plotdata.items():
            store.write_plotdata(grouping, rows)

    def synth(self):
        """Write a synthetic dataset"""
        config = SyntheticConfig(**self._config().get('synthetic', {}))
        ds = generate_synthetic(config, self._seed())
        out = Path(self.args.out)
        save_dataset(ds, out / "data.csv", out / "manifest.json", Config.FLOAT_FORMAT)

    def run(self) -> int:
        try:
            Config.validate()
            getattr(self, self.args.command)()
            return 0
        except PydanticValidationError as e:
            error = PlanValidationError(str(e))
        except Exception as e:
            error = e
        logger.error(f"Command {self.args.command} failed", error=error)
        return exit_code_for(error)


class ShiftLabArgumentParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors as validation failures"""

    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = ShiftLabArgumentParser(prog="shiftlab", description="Distribution-shift laboratory")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--data')
    common.add_argument('--manifest')
    common.add_argument('--config')
    common.add_argument('--seed', type=int)
    common.add_argument('--workers', type=int)
    common.add_argument('--out', default='out')

    grouping = argparse.ArgumentParser(add_help=False)
    grouping.add_argument('--season', action='store_true')
    grouping.add_argument('--region')
    grouping.add_argument('--years', nargs='+')

    divergence = argparse.ArgumentParser(add_help=False)
    divergence.add_argument('--pair-budget', type=int, required=True)
    divergence.add_argument('--normalization', required=True, choices=[m.value for m in NormalizationMode])
    divergence.add_argument('--k', type=int, default=Config.KNN_K)
    divergence.add_argument('--permutations', type=int)

    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('ingest', parents=[common])
    sub.add_parser('partition', parents=[common, grouping])

    shift = sub.add_parser('shift', parents=[common, grouping, divergence])
    shift.add_argument('--groups', nargs=2)
    shift.add_argument('--scan', action='store_true')
    shift.add_argument('--reference', default='1979-1988')
    shift.add_argument('--compare', nargs='+', default=[])

    permtest = sub.add_parser('permtest', parents=[common, grouping, divergence])
    permtest.add_argument('--groups', nargs=2, required=True)
    permtest.add_argument('--statistic', choices=list(STATISTICS), default='ed')

    train_parser = sub.add_parser('train', parents=[common, grouping])
    train_parser.add_argument('--group')

    sub.add_parser('sweep', parents=[common])
    calibrate_parser = sub.add_parser('calibrate', parents=[common])
    calibrate_parser.add_argument('--params')
    sub.add_parser('matrix', parents=[common])

    report = sub.add_parser('report', parents=[common])
    report.add_argument('--records')
    report.add_argument('--groupings', nargs='+', choices=list(GROUPINGS))
    report.add_argument('--include-diagonal', action='store_true')

    sub.add_parser('synth', parents=[common])
    return parser


def main(argv=None) -> int:
    """Main function"""
    try:
        args = build_parser().parse_args(argv)
        if args.command == 'shift' and not args.scan and not args.groups:
            raise ValidationError("shift needs --groups A B or --scan")
    except ValidationError as e:
        logger.error("Invalid command line", error=e)
        return exit_code_for(e)
    return ShiftLabCli(args).run()


if __name__ == "__main__":
    sys.exit(main())
