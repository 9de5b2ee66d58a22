from gridflow.evaluation import summarize
from gridflow.plotting import bar_chart, loss_curve
from gridflow.training import TrainHistory

from test.utils import metric_report


def test_loss_curve_is_reproducible(tmp_path):
    history = TrainHistory(train_loss=[1.0, 0.5, 0.4], val_loss=[1.2, 0.6, 0.7], lr=[1e-3] * 3,
                           best_epoch=2, best_val_loss=0.6)
    loss_curve(history, str(tmp_path / 'a.svg'), title='GCN')
    loss_curve(history, str(tmp_path / 'b.svg'), title='GCN')
    a = (tmp_path / 'a.svg').read_bytes()
    assert a.startswith(b'<?xml')
    assert a == (tmp_path / 'b.svg').read_bytes()


def test_bar_chart_with_missing_metric(tmp_path):
    summary = summarize([metric_report('gcn', 'ieee14', 0.1, None), metric_report('gat', 'ieee30', 0.2, 0.8)])
    for metric in ('nrmse', 'r2', 'loss'):
        path = tmp_path / '{0}.svg'.format(metric)
        bar_chart(summary, metric, str(path))
        assert path.stat().st_size > 0
