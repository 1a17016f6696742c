import xml.etree.ElementTree as ET

import numpy as np

from dynocast.svgplot import SvgCanvas, plot_curves, plot_regions, plot_trajectories
from dynocast.track import stadium_track


def test_canvas_emits_parseable_svg(tmp_path):
    canvas = SvgCanvas()
    pts = np.array([[0.0, 0.0], [10.0, 5.0], [20.0, -3.0]])
    canvas.fit(pts)
    canvas.polyline(pts, stroke="#d00")
    canvas.polygon(pts, fill="#0d0")
    canvas.circle((10.0, 5.0))
    canvas.text((10, 10), "label <with> special & chars")
    path = tmp_path / "plot.svg"
    canvas.save(path)
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    tags = [child.tag.split("}")[-1] for child in root]
    assert "polyline" in tags and "polygon" in tags and "circle" in tags and "text" in tags


def test_plot_helpers_produce_valid_files(tmp_path):
    track = stadium_track(straight=20.0, radius=5.0)
    rng = np.random.default_rng(0)
    truth = np.stack([np.linspace(1, 6, 30), np.zeros(30), np.zeros(30), np.ones(30)], axis=1)
    preds = {"physics": truth + rng.normal(0, 0.05, truth.shape)}
    p1 = tmp_path / "traj.svg"
    plot_trajectories(p1, track, truth, preds, obs=truth[:5])
    polys = [np.array([[0, 0], [1, 0], [1, 1], [0, 1]]) + k for k in range(3)]
    p2 = tmp_path / "regions.svg"
    plot_regions(p2, track, truth, polys, truth=truth)
    p3 = tmp_path / "curves.svg"
    plot_curves(p3, {"loss": np.exp(-np.linspace(0, 3, 50))}, title="loss", log_y=True)
    for path in (p1, p2, p3):
        ET.parse(path)
