import os

import numpy as np

from geoflap.plots import plot_sensitivity, plot_stabilization


def test_plot_sensitivity(tmp_path):
    rng = np.random.default_rng(0)
    table = 1e-4 * rng.normal(size=(6, 6))
    paths = plot_sensitivity(table, str(tmp_path))
    assert all(os.path.exists(p) for p in paths)


def test_plot_stabilization(tmp_path):
    t = np.linspace(0.0, 0.4, 21)
    paths = plot_stabilization(t, np.exp(-5 * t), 0.1 + t, str(tmp_path))
    assert all(os.path.exists(p) for p in paths)
    assert paths[0].endswith("stabilization.png")
