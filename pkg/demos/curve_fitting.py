"""Tour of the model registry and the damped Gauss-Newton fitter.

Generates noisy synthetic data for a few registry models, fits them without
hand-tuned starting values, and prints parameters with 1-sigma uncertainties.
Ends with the temperature-activated relaxation fit, where the orbital gap is
held fixed and only the activation scale is free.
"""

import numpy as np

from sivreg import fitting

rng = np.random.default_rng(7)

print("registered models:")
names = sorted(fitting.model_registry())
for i in range(0, len(names), 6):
    print("   " + ", ".join(names[i:i + 6]))


def show(result):
    for name in result.param_names:
        print("   %-8s %14.6g +- %.2g" % (name, result[name],
                                          result.error(name)))


# detuned Ramsey fringe with a stretched envelope, 2% noise
model = fitting.get_model("ramsey")
x = np.linspace(0.0, 12e-6, 300)
truth = [0.45, 0.8e6, 0.6, 0.1, 4.67e-6, 1.3, 0.5]
y = model(x, truth) + 0.02 * rng.standard_normal(x.size)
res = fitting.least_squares(model, x, y)
print("\nramsey fringe (true f = 0.8 MHz, T2 = 4.67 us):")
show(res)

# saturation of the optical pumping rate, weighted by shot counts
model = fitting.get_model("pol_rate")
s = np.linspace(0.2, 8.0, 25)
y = model(s, [96.251e6, 816.285]) * (1.0 + 0.01 * rng.standard_normal(s.size))
weights = np.full(s.size, 1.0)
weights[:5] = 4.0   # the low-saturation points were averaged 4x longer
res = fitting.least_squares(model, s, y, weights=weights,
                            fixed={"gamma0": 96.251e6})
print("\npumping-rate saturation (gamma0 fixed, true eta = 816.285):")
show(res)

# two-tone beat, no initial guess supplied at all
model = fitting.get_model("rabi_beat")
x = np.linspace(0.0, 20e-6, 1000)
truth = [0.6, 1.0e6, 0.5, 9e-6, 0.25, 2.2e6, 0.4, 9e-6, 0.45]
y = model(x, truth) + 0.01 * rng.standard_normal(x.size)
res = fitting.least_squares(model, x, y)
print("\ntwo-tone beat (true 1.0 and 2.2 MHz):")
print("   f1 = %.4f MHz, f2 = %.4f MHz, residual %.3f"
      % (res["f1"] / 1e6, res["f2"] / 1e6, res.residual_norm))

# temperature-activated relaxation with the orbital gap pinned
model = fitting.get_model("orbach_offset")
t_grid = np.linspace(2.6, 10.0, 25)
truth = {"gamma0": 300.0, "a": 2.2e-31, "alpha": 1.543, "delta": 1110.755e9}
y = model(t_grid, [truth[n] for n in model.param_names])
y *= 1.0 + 0.01 * rng.standard_normal(t_grid.size)
res = fitting.least_squares(model, t_grid, y, fixed={"delta": truth["delta"]})
print("\nactivated relaxation (gap fixed at 1110.755 GHz, true alpha = 1.543):")
show(res)
