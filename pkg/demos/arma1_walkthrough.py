"""Four routes to the feedback capacity of one ARMA(1) channel.

Run:  python3 demos/arma1_walkthrough.py
"""

from gfcap.arma1 import arma1_certificate, solve_arma1
from gfcap.certsolve import multi_start_solve
from gfcap.iterate import kkt_residual, run
from gfcap.nblock import nblock_lower_bound
from gfcap.quadrature import waterfill_capacity
from gfcap.spectra import ArmaModel

P, ALPHA, BETA = 1.0, 0.5, 0.0
model = ArmaModel((ALPHA,), (BETA,))

sol = solve_arma1(P, ALPHA, BETA)
print(f"closed form   x = {sol.x:+.12f}   capacity = {sol.capacity_nats:.12f} nats")

report = arma1_certificate(P, ALPHA, BETA)
print(f"  its certificate passes every condition: {report['pass']}")

cert = multi_start_solve(model, P, exhaustive=False)[0]
print(f"certificate   x = {complex(cert.x[0]).real:+.12f}   capacity = {cert.capacity:.12f} nats")

cap, filt, trace = run(model, P)
lam, resid, margin = kkt_residual(filt, model)
print(f"iterate                            capacity = {cap:.12f} nats  (KKT residual {resid:.1e})")

print("n-block lower bounds:")
for n in (8, 16, 32, 64):
    rate, _ = nblock_lower_bound(model, P, n)
    print(f"  n = {n:3d}   {rate:.6f} nats   gap {sol.capacity_nats - rate:.4f}")

print(f"no-feedback water-filling          capacity = {waterfill_capacity(model, P):.6f} nats")
