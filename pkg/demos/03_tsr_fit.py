"""Fit the regression correction to a biased model series and choose K."""
from datetime import timedelta

from metocean import synthetic
from metocean.timeseries import H, to_utc
from metocean.tsr import FourierConfig, evaluate, fit_series, predict, validation_curve

start = to_utc("2019-01-01T00:00Z")
n = 3 * 8760
wave, _ = synthetic.metocean_truth(start, n, seed=7)
obs = synthetic.series(H, start, wave, "B1")
num = synthetic.series(H, start, synthetic.numerical_from_truth(wave, H, seed=8), "B1")

t1, t2, t3 = (start + timedelta(hours=8760 * k) for k in (1, 2, 3))
train = (num.slice_time(start, t2), obs.slice_time(start, t2))
test = (num.slice_time(t2, t3), obs.slice_time(t2, t3))

# pick K on a held-out year inside the training span
curve = validation_curve((num.slice_time(start, t1), obs.slice_time(start, t1)),
                         (num.slice_time(t1, t2), obs.slice_time(t1, t2)), [1, 2, 4, 8])
print("validation MAE by K:", {k: round(v, 4) for k, v in curve.items()})
K = min(curve, key=curve.get)

model = fit_series(*train, config=FourierConfig(K))
print("K=%d  n=%d  p=%d  eta=%.4f" % (K, model.n_train, model.coefficients.size, model.eta_hat))
for name, pred in (("numerical", test[0]), ("tsr", predict(model, test[0]))):
    ev = evaluate(pred, test[1])
    print("%-9s r2 %.3f  rmse %.3f  bias %+.3f" % (name, ev.r2, ev.rmse, ev.bias))
