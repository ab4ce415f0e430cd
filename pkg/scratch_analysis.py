import time
import numpy as np
from diqc.poly import VarRegistry, Polynomial, parse_poly
from diqc.diffsys import NominalSystem, differentiate_system, extend
from diqc.sosp import Region
from diqc import analysis, iqc, linalg, lti

# --- LTI first order: xdot = -x + d, e = x ---
reg = VarRegistry(["x", "d"])
ns = NominalSystem(
    registry=reg, x_idx=(0,), w_idx=(), d_idx=(1,),
    f=(parse_poly("-x + d", reg),), g=(), h=(parse_poly("x", reg),),
)
ds = differentiate_system(ns)
ext = extend(ds, None)
t0 = time.time()
cert = analysis.min_gain(ext, None, Region(), analysis.AnalysisConfig(p_degree=0))
print(f"LTI alpha = {cert.alpha:.6f} (expect 1.0) in {time.time()-t0:.2f}s; report {cert.residual_report}")

# --- static system e = d ---
reg2 = VarRegistry(["x", "d"])
ns2 = NominalSystem(
    registry=reg2, x_idx=(0,), w_idx=(), d_idx=(1,),
    f=(parse_poly("-x", reg2),), g=(), h=(parse_poly("d", reg2),),
)
cert2 = analysis.min_gain(extend(differentiate_system(ns2), None), None, Region(),
                          analysis.AnalysisConfig(p_degree=0))
print(f"static e=d alpha = {cert2.alpha:.6f} (expect ~1)")

# --- jet engine ---
regj = VarRegistry(["psi", "phi"])
f = [parse_poly("phi", regj), parse_poly("-psi - 1.5*phi^2 - 0.5*phi^3", regj)]
B = np.array([[1.0], [0.0]])
E = np.array([[0.0], [1.0]])
Ce = np.array([[0.0, 1.0]])   # e = phi + 0.1 u
region = Region.make([parse_poly("1 - phi^2", regj)], box={1: (-1.0, 1.0)})

t0 = time.time()
syn = analysis.ccm_synthesize(f, B, region, 0.93, E=E, Ce=Ce, Du=0.1,
                              y_degree=2, y_vars=["phi"])
print(f"synthesis: alpha={syn.alpha:.4f} effort={syn.effort:.1f} W={syn.W.ravel()} in {time.time()-t0:.2f}s")
print("K =", syn.K)

ds_cl = analysis.controlled_diffsystem(f, B, E, Ce, np.array([[0.1]]), syn.K)

for theta in [0.0, 0.04, 0.08, 0.12, 0.16]:
    ms = iqc.delay_multipliers(theta)
    psi_st, ranges = ms.stacked()
    extj = extend(ds_cl, psi_st, ranges)
    t0 = time.time()
    try:
        c = analysis.min_gain(extj, ms, region, analysis.AnalysisConfig(p_degree=0))
        print(f"theta={theta}: alpha={c.alpha:.4f} lam={c.lam} ({time.time()-t0:.2f}s) "
              f"verify={c.residual_report['all_passed']}")
    except analysis.InfeasibleError as e:
        print(f"theta={theta}: infeasible ({time.time()-t0:.2f}s)")
    except analysis.AnalysisError as e:
        print(f"theta={theta}: ERROR {e} ({time.time()-t0:.2f}s)")
