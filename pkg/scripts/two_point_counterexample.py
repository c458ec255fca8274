"""Two-atom scalar ensemble where the per-sample check passes but detectability on average fails.

Prints the A0 constant for K = (0, -2), the best A1 constant over a gain grid,
and the averaged-decay verification for the closed loop.
"""
import numpy as np

from turnpike_lab.assumptions import (
    check_A0, check_complementary, scan_scalar_feedback, stationary_coercivity, verify_average_decay,
)
from turnpike_lab.dynamics import TimeGrid
from turnpike_lab.ensemble import bernoulli_spec, build_ensemble


def main() -> None:
    ens = build_ensemble(bernoulli_spec())
    K = np.array([[[0.0]], [[-2.0]]])
    a0 = check_A0(ens, K)
    print(f"A0 with K = (0, -2): alpha = {a0.alpha:.6f} (passed: {a0.passed})")
    a1 = scan_scalar_feedback(ens, "A1", [(-10.0, 10.0, 0.05)] * 2)
    gains = a1.gain_used[:, 0, 0]
    print(f"A1 grid scan: best alpha = {a1.alpha:.6f} at K = ({gains[0]:g}, {gains[1]:g}) (passed: {a1.passed})")
    comp = check_complementary(ens, K)
    print(f"averaged decay constant: alpha = {comp.alpha:.6f}")
    decay = verify_average_decay(ens, K, TimeGrid(10.0, 200), np.ones((2, 1)), comp.alpha)
    print(f"|E x(t)|^2 <= exp(-t)|E x0|^2 on [0, 10]: {decay.holds}, observed rate {decay.observed_rate:.3f}")
    print(f"stationary coercivity: AC {stationary_coercivity(ens, 'AC'):.6f}, AB {stationary_coercivity(ens, 'AB'):.6f}")


if __name__ == "__main__":
    main()
