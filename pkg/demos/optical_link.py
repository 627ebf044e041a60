"""Driven-dissipative dynamics of the optical transition.

The two-level optical link at T1 = 1.6535 ns: resonant Rabi flopping under
increasing drive, the Fourier-limited linewidth recovered from the damped
envelope, coherent control with the relative phase of two pulses, and a
lifetime fit on synthetic fluorescence decays.
"""

import math

import numpy as np

from sivreg import optics

T1 = 1.6535e-9

p = optics.OpticalParams(t1=T1)
print("drive calibration: %.4f GHz at full amplitude" % (optics.RABI_MAX / 1e9))

times = np.linspace(0.0, 3.5e-9, 121)
print("\namplitude   fitted Rabi (MHz)   expected")
for amplitude in (0.3, 0.6, 0.9):
    sweep = optics.run_optical_rabi(p, amplitude, times)
    frequency, _ = optics.fit_damped_rabi(sweep)
    print("   %.1f       %9.1f          %9.1f"
          % (amplitude, frequency / 1e6, amplitude * optics.RABI_MAX / 1e6))

sweep = optics.run_optical_rabi(p, 0.6, np.linspace(0.0, 5e-9, 161))
gamma2 = optics.extract_optical_decoherence(p, sweep)
print("\ndecoherence rate from the Rabi envelope: %.4f MHz" % (gamma2 / 1e6))
print("Fourier limit 1/(2 pi T1):               %.4f MHz"
      % (1.0 / (2.0 * math.pi * T1) / 1e6))

dephased = optics.OpticalParams(t1=T1,
                                gamma_phi=optics.gamma_phi_from_t2(1.18e-9, T1))
sweep = optics.run_optical_rabi(dephased, 0.6, np.linspace(0.0, 5e-9, 161))
print("with pure dephasing (T2 = 1.18 ns):      %.4f MHz"
      % (optics.extract_optical_decoherence(dephased, sweep) / 1e6))

# relative-phase control of two pi/2 pulses
seg_t = 0.35e-9
seg_a = 1.0 / (4.0 * seg_t * optics.RABI_MAX)
train = optics.OpticalPulseTrain(((seg_a, 0.0, seg_t), (seg_a, 0.0, seg_t)),
                                 buffer=0.8e-9)
phases = np.linspace(0.0, 2.0 * math.pi, 9)
control = optics.run_phase_control(dephased, train, phases)
print("\nrelative phase sweep (pi/2 - buffer - pi/2):")
for phi, s in zip(phases, control.signal):
    print("  phi = %5.2f rad: excited population %.4f" % (phi, s))

# lifetime statistics across an ensemble of synthetic decay traces
rng = np.random.default_rng(12)
grid = np.linspace(0.0, 8e-9, 40)
truths = np.clip(rng.normal(T1, 0.377e-9, 200), 0.3e-9, None)
traces = [(grid, np.exp(-grid / t) * (1.0 + 0.005 * rng.standard_normal(40)))
          for t in truths]
mean, std = optics.lifetime_ensemble(traces)
print("\nlifetime ensemble: %.3f +- %.3f ns (drawn from %.3f +- %.3f)"
      % (mean / 1e-9, std / 1e-9, T1 / 1e-9, 0.377))
