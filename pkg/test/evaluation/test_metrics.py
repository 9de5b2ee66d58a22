import numpy as np
import pytest

from gridflow.checkpoint import Checkpoint
from gridflow.evaluation import (evaluate, metrics, predict, read_reports, summarize, write_reports,
                                 write_summary)
from gridflow.exceptions import ContractError
from gridflow.grid import EdgeIndex
from gridflow.model import GnnConfig, init_params
from gridflow.training import compute_norm_stats

from test.utils import metric_report, synthetic_dataset


def test_two_point_example():
    report = metrics([0.5, 0.5], [0.0, 1.0])
    assert report.mse == pytest.approx(0.25)
    assert report.rmse == pytest.approx(0.5)
    assert report.nrmse == pytest.approx(0.5)
    assert report.mae == pytest.approx(0.5)
    assert report.r2 == pytest.approx(0.0)


def test_perfect_prediction():
    truth = np.random.default_rng(0).normal(size=(5, 4, 2))
    report = metrics(truth, truth)
    assert report.mse == 0.0
    assert report.r2 == 1.0
    assert set(report.per_target) == {'v', 'delta'}


def test_per_target_columns():
    truth = np.array([[1.0, 0.0], [1.1, 0.2], [0.9, -0.2]])
    pred = truth + np.array([[0.01, 0.0], [0.0, 0.0], [-0.01, 0.0]])
    report = metrics(pred, truth)
    assert report.per_target['delta']['mse'] == 0.0
    assert report.per_target['delta']['r2'] == 1.0
    assert report.per_target['v']['rmse'] == pytest.approx(np.sqrt(2e-4 / 3))
    assert report.per_target['v']['nrmse'] == pytest.approx(np.sqrt(2e-4 / 3) / 0.2)
    assert report.nrmse == pytest.approx(0.5 * report.per_target['v']['nrmse'])


def test_constant_column():
    truth = np.array([[1.0, 0.0], [1.0, 1.0]])
    report = metrics(truth + 0.1, truth)
    assert report.per_target['v']['nrmse'] is None
    assert report.per_target['v']['r2'] is None
    assert report.nrmse == pytest.approx(report.per_target['delta']['nrmse'])
    assert report.r2 == pytest.approx(report.per_target['delta']['r2'])


def test_shape_mismatch():
    with pytest.raises(ContractError):
        metrics(np.zeros(3), np.zeros(4))
    with pytest.raises(ContractError):
        metrics(np.zeros(0), np.zeros(0))


def test_summarize():
    reports = [metric_report('gcn', 'ieee14', 0.1, 0.9),
               metric_report('gcn', 'ieee14', 0.3, 0.7, 'scenario_02'),
               metric_report('gat', 'ieee14', 0.2, 0.8)]
    summary = summarize(reports)
    assert list(summary['arch']) == ['gat', 'gcn']
    gcn = summary[summary['arch'] == 'gcn'].iloc[0]
    assert gcn['datasets'] == 2
    assert gcn['nrmse_mean'] == pytest.approx(0.2)
    assert gcn['nrmse_min'] == pytest.approx(0.1)
    assert gcn['r2_max'] == pytest.approx(0.9)
    with pytest.raises(ContractError):
        summarize([])


def test_reports_round_trip(tmp_path):
    reports = [metric_report('sage', 'ieee30', 0.05, 0.99), metric_report('sage', 'ieee30', 0.07, None)]
    write_reports(reports, str(tmp_path / 'reports.csv'), str(tmp_path / 'reports.json'))
    assert read_reports(str(tmp_path / 'reports.json')) == reports
    write_summary(summarize(reports), str(tmp_path / 'summary.csv'))
    assert (tmp_path / 'summary.csv').exists()


def make_checkpoint():
    cfg = GnnConfig(n_bus=3, layer_sizes=(3, 3), fc_hidden=4)
    return Checkpoint(params=init_params(0, cfg), norm=compute_norm_stats(synthetic_dataset(20, n_bus=3)),
                      edges=EdgeIndex(pairs=[(0, 1), (1, 0), (1, 2), (2, 1)]), case='three_bus', bus_ids=(1, 2, 3))


def test_evaluate_reports_per_dataset():
    ckpt = make_checkpoint()
    datasets = [synthetic_dataset(5, n_bus=3, seed=k, name='scenario_0{0}'.format(k + 1)) for k in range(3)]
    reports = evaluate(ckpt, datasets, workers=2)
    assert [r.dataset for r in reports] == ['scenario_01', 'scenario_02', 'scenario_03']
    assert all(r.arch == 'gcn' and r.case == 'three_bus' and r.samples == 5 for r in reports)
    pred, loss = predict(ckpt, datasets[1])
    assert pred.shape == (5, 3, 2)
    assert reports[1].loss == loss
    assert reports[1].mse == pytest.approx(metrics(pred, datasets[1].targets).mse)


def test_evaluate_rejects_other_topology():
    with pytest.raises(ContractError):
        evaluate(make_checkpoint(), [synthetic_dataset(5, n_bus=4)])
