"""
Regression metrics on denormalized predictions and their aggregation
"""

import concurrent.futures
import dataclasses
import json
import logging

import numpy as np
import pandas as pd
from sklearn.metrics import mean_absolute_error, mean_squared_error, r2_score

from .exceptions import ContractError
from .model import model_forward
from .training import EVAL_CHUNK, targets_to_vector, vector_to_targets
from .utils import atomic_write, worker_count


METRICS = ['mse', 'rmse', 'nrmse', 'mae', 'r2']
TARGET_NAMES = ['v', 'delta']
SUMMARY_METRICS = ['nrmse', 'r2', 'loss', 'mse', 'rmse', 'mae', 'nrmse_v', 'nrmse_delta', 'r2_v', 'r2_delta']


@dataclasses.dataclass
class MetricReport:
    mse: float
    rmse: float
    nrmse: float
    mae: float
    r2: float
    per_target: dict
    dataset: str = ''
    arch: str = ''
    case: str = ''
    loss: float = None
    samples: int = 0
    nrmse_normalizer: str = 'range'

    def row(self):
        row = {'dataset': self.dataset, 'arch': self.arch, 'case': self.case, 'samples': self.samples}
        for metric in METRICS:
            row[metric] = getattr(self, metric)
        row['loss'] = self.loss
        for target, values in self.per_target.items():
            for metric in METRICS:
                row['{0}_{1}'.format(metric, target)] = values[metric]
        return row

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def _column_names(k):
    return TARGET_NAMES if k == len(TARGET_NAMES) else ['col{0}'.format(i) for i in range(k)]


def _mean_defined(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def metrics(pred, truth, **labels):
    """
    MSE, RMSE, NRMSE (range-normalized), MAE and R^2, overall and per target column
    Overall NRMSE and R^2 are the average over columns where they are defined;
    a constant truth column reports them as None.
    :param pred: predictions (..., k) or a vector
    :param truth: targets of the same shape
    :param labels: dataset / arch / case / loss / samples passed to the report
    :return: MetricReport
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ContractError('Prediction shape {0} differs from target shape {1}.'.format(pred.shape, truth.shape))
    if truth.size == 0:
        raise ContractError('Cannot compute metrics of an empty set.')
    if truth.ndim == 1:
        pred, truth = pred[:, None], truth[:, None]
    pred = pred.reshape(-1, pred.shape[-1])
    truth = truth.reshape(-1, truth.shape[-1])

    per_target = {}
    for k, name in enumerate(_column_names(truth.shape[1])):
        column = truth[:, k]
        mse = float(mean_squared_error(column, pred[:, k]))
        span = float(column.max() - column.min())
        # R^2 is undefined for a constant column
        constant = not np.any(column != column[0])
        per_target[name] = {
            'mse': mse,
            'rmse': float(np.sqrt(mse)),
            'nrmse': float(np.sqrt(mse) / span) if span > 0 else None,
            'mae': float(mean_absolute_error(column, pred[:, k])),
            'r2': None if constant else float(r2_score(column, pred[:, k])),
        }

    mse = float(mean_squared_error(truth, pred))
    return MetricReport(mse=mse, rmse=float(np.sqrt(mse)),
                        nrmse=_mean_defined(v['nrmse'] for v in per_target.values()),
                        mae=float(mean_absolute_error(truth, pred)),
                        r2=_mean_defined(v['r2'] for v in per_target.values()),
                        per_target=per_target, **labels)


def check_topology(ckpt, dataset):
    if dataset.n_bus != ckpt.model_cfg.n_bus or tuple(dataset.bus_ids) != tuple(ckpt.bus_ids):
        raise ContractError('Dataset {0} ({1} buses) does not match the {2} checkpoint topology ({3} buses).'.format(
            dataset.name, dataset.n_bus, ckpt.case, ckpt.model_cfg.n_bus))


def predict(ckpt, dataset):
    """
    Eval-mode predictions in physical units
    :return: (samples, n_bus, 2) array, plus the normalized-unit MSE
    """
    check_topology(ckpt, dataset)
    x = ckpt.norm.normalize_features(dataset.features)
    y = targets_to_vector(ckpt.norm.normalize_targets(dataset.targets))
    outputs = []
    for start in range(0, x.shape[0], EVAL_CHUNK):
        outputs.append(np.asarray(model_forward(x[start:start + EVAL_CHUNK], ckpt.edges, ckpt.params,
                                                training=False)))
    normalized = np.concatenate(outputs, axis=0)
    loss = float(np.mean((normalized - y) ** 2))
    return ckpt.norm.denormalize_targets(vector_to_targets(normalized, dataset.n_bus)), loss


def evaluate(ckpt, datasets, workers=None):
    """
    One report per test dataset using the best-validation parameters of a checkpoint
    :param ckpt: Checkpoint
    :param datasets: list of Dataset
    :param workers: worker threads (capped by GRIDFLOW_THREADS)
    :return: list of MetricReport in dataset order
    """
    logger = logging.getLogger('gridflow.evaluation')
    for dataset in datasets:
        check_topology(ckpt, dataset)

    def report(dataset):
        pred, loss = predict(ckpt, dataset)
        rep = metrics(pred, dataset.targets, dataset=dataset.name, arch=ckpt.arch, case=ckpt.case,
                      loss=loss, samples=len(dataset))
        logger.info('%s / %s / %s: NRMSE %s, R2 %s', ckpt.case, ckpt.arch, dataset.name,
                    _fmt(rep.nrmse), _fmt(rep.r2))
        return rep

    with concurrent.futures.ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        return list(pool.map(report, datasets))


def _fmt(value):
    return 'n/a' if value is None else '{0:.4g}'.format(value)


def reports_frame(reports):
    return pd.DataFrame([r.row() for r in reports])


def summarize(reports):
    """
    Mean / min / max of every metric per (architecture, case)
    :param reports: non-empty list of MetricReport
    :return: pandas DataFrame with one row per (arch, case)
    """
    if not reports:
        raise ContractError('Nothing to summarize.')
    frame = reports_frame(reports)
    rows = []
    for (arch, case), group in frame.groupby(['arch', 'case'], sort=True):
        row = {'arch': arch, 'case': case, 'datasets': len(group)}
        for metric in SUMMARY_METRICS:
            values = pd.to_numeric(group[metric], errors='coerce') if metric in group else pd.Series(dtype=float)
            row[metric + '_mean'] = values.mean() if values.notna().any() else None
            row[metric + '_min'] = values.min() if values.notna().any() else None
            row[metric + '_max'] = values.max() if values.notna().any() else None
        rows.append(row)
    return pd.DataFrame(rows)


def write_reports(reports, csv_path, json_path):
    logger = logging.getLogger('gridflow.evaluation')
    with atomic_write(csv_path) as f:
        reports_frame(reports).to_csv(f, index=False, float_format='%.17g', lineterminator='\n')
    with atomic_write(json_path) as f:
        json.dump([r.to_dict() for r in reports], f, indent=2, sort_keys=True)
        f.write('\n')
    logger.info('%d report(s) written to %s', len(reports), csv_path)


def read_reports(json_path):
    with open(json_path, encoding='utf-8') as f:
        return [MetricReport.from_dict(data) for data in json.load(f)]


def write_summary(summary, csv_path):
    with atomic_write(csv_path) as f:
        summary.to_csv(f, index=False, float_format='%.17g', lineterminator='\n')
