import matplotlib
matplotlib.use('Agg')

from mongeflow import plot, sdot, verify, fixtures
from mongeflow.latent import build_complex
import numpy as np


def test_scatter_and_complex():
    cloud = fixtures.two_cluster8()
    plot.scatter(cloud.points, labels=cloud.labels)
    plot.scatter(np.random.default_rng(0).normal(size=200), title='1d')
    K = cloud.size
    stats = sdot.CellStats(np.full(K, 1. / K), np.asarray(cloud.points), np.ones(K))
    cx = build_complex(sdot.make_potential(cloud), stats)
    ax = plot.complex2d(cx, cloud.points)
    assert len(ax.lines) > 0


def test_report_figure(tmp_path):
    r = verify.verify_potential_stability(fixtures.line_irregular8(), grid_points=2001)
    path = tmp_path / 'stability.png'
    assert plot.save_report_figure(r, path)
    assert path.stat().st_size > 0
    assert not plot.save_report_figure(r._replace(curve=None), tmp_path / 'none.png')
