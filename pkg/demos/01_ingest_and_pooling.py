"""Parse buoy files, put them on an hourly grid and pool two gappy stations."""
import numpy as np

from metocean import synthetic
from metocean.ingest import ObservationFormat, parse_observation_file
from metocean.timeseries import H, missing_report, pool_series, resample_to_hourly

start = "2019-01-01T00:00Z"
wave, wind = synthetic.metocean_truth(start, 24 * 60, seed=1)

# an NDBC standard-met file with a few hours blanked out (written as 99.00 / 99.0)
missing = np.zeros(wave.size, bool)
missing[100:130] = True
text = synthetic.ndbc_text(start, np.round(wave, 2), np.round(wind, 1), missing)
print(text.splitlines()[0])
batches = parse_observation_file(text, ObservationFormat.NDBC_STDMET, "B1")
wave_series = resample_to_hourly(next(b for b in batches if b.variable is H))
print("B1 wave height: %d slots, missing %.3f" % (len(wave_series), missing_report(wave_series)))

# two co-located stations with staggered outages
a, b = wave.copy(), wave + 0.05
a[200:500] = np.nan
b[600:900] = np.nan
sa = synthetic.series(H, start, a, "m1")
sb = synthetic.series(H, start, b, "m2")
pooled = pool_series([sa, sb], "POOL")
for s in (sa, sb, pooled):
    print("%-5s missing %.3f" % (s.site_id, missing_report(s)))
