"""Triangulate a cell of model grid points and interpolate to a buoy location."""
import numpy as np

from metocean import synthetic
from metocean.ingest import delaunay, extract_numerical_series, interpolation_weights, parse_grid_file
from metocean.timeseries import H, V

pts = synthetic.cell_around(40.0, -70.0)
tri = delaunay(pts)
print("points:", pts)
print("triangles:", tri.triangles)

site = (40.06, -69.93)
idx, w = interpolation_weights(tri, site)
print("vertices", idx, "weights", w)

# an affine field comes back exactly
f = lambda p: 1.5 + 0.2 * p[0] - 0.1 * p[1]
vals = [f(p) for p in pts]
print("affine check:", np.isclose(sum(wi * vals[i] for i, wi in zip(idx, w)), f(site)))

# a full grid file, two days long
wave, wind = synthetic.metocean_truth("2019-01-01T00:00Z", 48, seed=3)
text = synthetic.grid_csv("2019-01-01T00:00Z", pts,
                          {H: synthetic.spread_to_cell(wave), V: synthetic.spread_to_cell(wind)})
grid = parse_grid_file(text)
for kind in (H, V):
    s = extract_numerical_series([g for g in grid if g.variable is kind], site, "B1")
    print(kind.value, np.round(s.values[:4], 3))
