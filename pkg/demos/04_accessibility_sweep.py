"""Approachability and accessibility over a grid of limits and mission lengths."""
from metocean import synthetic
from metocean.metrics import MissionWindow, SafetyLimits, accessibility, approachability, limits_grid, sweep
from metocean.timeseries import H, SUMMER, V, WINTER

start = "2019-01-01T00:00Z"
wave, wind = synthetic.metocean_truth(start, 8760, seed=2)
data = {H: synthetic.series(H, start, wave), V: synthetic.series(V, start, wind)}

lim = SafetyLimits({H: 1.5, V: 12.0})
print("approachability", round(approachability(data, lim).score, 3))
for zeta in (1, 6, 12, 24):
    print("accessibility zeta=%2d" % zeta, round(accessibility(data, lim, MissionWindow(zeta)).score, 3))

cells = sweep(data, limits_grid([1.0, 1.5, 2.0, 2.5]), [2, 12, 24], seasons=(WINTER, SUMMER), subject="site")
for c in cells:
    print(c.season, c.limits.label(), c.zeta, round(c.report.score, 3))
