"""How the guaranteed-safe step sizes scale with the network and the compressor.

Prints (eta, gamma) from the step-size calculator for rings of growing size
and for several top-k retention ratios, on a unit-smoothness problem.

    python3 demos/02_step_sizes.py
"""

from docom import ring_topology, safe_step_sizes


def main():
    L, beta = 1.0, 0.1
    print("ring size vs safe steps (top-k keeping 10%)")
    print(f"{'n':>5}{'rho':>12}{'omega_bar':>12}{'gamma':>14}{'eta':>14}")
    for n in (4, 8, 16, 32, 64):
        t = ring_topology(n)
        eta, gamma = safe_step_sizes(L, t.rho, 0.1, t.omega_bar, n, beta)
        print(f"{n:>5}{t.rho:>12.4g}{t.omega_bar:>12.4g}{gamma:>14.4e}{eta:>14.4e}")

    print("\nretention ratio vs safe steps (ring of 16)")
    t = ring_topology(16)
    print(f"{'k/d':>6}{'gamma':>14}{'eta':>14}")
    for delta in (0.01, 0.05, 0.1, 0.5, 1.0):
        eta, gamma = safe_step_sizes(L, t.rho, delta, t.omega_bar, 16, beta)
        print(f"{delta:>6}{gamma:>14.4e}{eta:>14.4e}")


if __name__ == "__main__":
    main()
