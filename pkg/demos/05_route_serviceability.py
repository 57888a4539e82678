"""Serviceability of a 12 hour out-and-back trip compared with per-location accessibility."""
import numpy as np

from metocean import synthetic
from metocean.metrics import (
    Location, MissionWindow, OperationalProfile, Route, SafetyLimits, build_position_matrix,
    route_accessibility_profile, serviceability,
)
from metocean.timeseries import H, V

start = "2019-01-01T00:00Z"
locations, series = [], []
for j in range(6):
    # one weather system, rougher further offshore
    wave, wind = synthetic.metocean_truth(start, 8760, seed=30, severity=1.0 + 0.1 * j)
    locations.append(Location("P%d" % (j + 1), 40.0, -74.0 + 0.3 * j))
    series.append({H: synthetic.series(H, start, wave), V: synthetic.series(V, start, wind)})
route = Route("transit", locations, series)

legs = [(1, 1), (2, 1), (3, 1), (4, 1), (5, 1), (6, 3), (5, 1), (4, 1), (3, 1), (2, 1)]
P = build_position_matrix(OperationalProfile(legs), 6, 12)
print(P.entries)

for h in (1.0, 1.5, 2.0, 2.5):
    lim = SafetyLimits({H: h, V: 12.0})
    s = serviceability(route, P, lim, MissionWindow(12)).score
    prof = route_accessibility_profile(route, lim, MissionWindow(12))
    acc = np.round([r.score for r in prof.accessibility], 3)
    print("H<%.1f  serviceability %.3f  route mean %.3f  per location %s" % (h, s, prof.average_accessibility, acc))
