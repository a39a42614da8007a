"""AC optimal power flow by a primal-dual interior-point method.

Polar formulation: variables are bus angles and magnitudes plus generator P
and Q.  Equalities are per-bus active/reactive balance and the slack angle
reference; inequalities are voltage bands, generator boxes, and
apparent-power-squared ratings at both ends of rated branches.  Cost is
convex polynomial per generator.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field
from scipy.sparse.linalg import splu

from .network import BusType, CostModel, PowerSystem, connected_components
from .powerflow import ValidationThresholds, build_ybus, compute_flows

FEASIBILITY_TOL = 1e-6


class ModelError(ValueError):
    """Malformed optimization input (nonconvex cost, disconnected network)."""


class InfeasibleDetected(RuntimeError):
    pass


class UnsolvedInput(ValueError):
    """Quality assessment asked for an unsolved solution."""


class OpfOptions(BaseModel):
    tol: float = 1e-6                 # scaled KKT residual target
    max_iterations: int = 150
    sigma: float = 0.1                # barrier reduction factor
    xi: float = 0.995                 # fraction-to-boundary
    feasibility_tol: float = FEASIBILITY_TOL

    model_config = {"frozen": True}


class ConstraintMargin(BaseModel):
    name: str
    margin: float                     # slack distance, >= 0 when satisfied


class BranchLoadingRecord(BaseModel):
    index: int
    from_bus: int
    to_bus: int
    mva_from: float
    mva_to: float
    rating_mva: float
    loading_percent: float


class ACOPFSolution(BaseModel):
    case_name: str
    solved: bool
    objective_cost: float
    gen_dispatch_mw: dict[str, float]
    gen_dispatch_mvar: dict[str, float]
    branch_loading: list[BranchLoadingRecord]
    min_voltage_pu: float
    max_voltage_pu: float
    losses_mw: float
    constraint_margins: list[ConstraintMargin]
    iterations: int
    convergence_message: str
    solved_at: float = 0.0
    vm_pu: list[float] = Field(default_factory=list)
    va_deg: list[float] = Field(default_factory=list)
    gen_p_mw: list[float] = Field(default_factory=list)
    gen_q_mvar: list[float] = Field(default_factory=list)
    max_loading_percent: float = 0.0
    max_balance_mismatch_pu: float = 0.0


class QualityWeights(BaseModel):
    convergence: float = 0.2
    constraints: float = 0.4
    economics: float = 0.2
    security: float = 0.2

    model_config = {"frozen": True}


class SolutionQuality(BaseModel):
    overall_score: float = Field(ge=0.0, le=10.0)
    convergence_quality: float = Field(ge=0.0, le=10.0)
    constraint_satisfaction: float = Field(ge=0.0, le=10.0)
    economic_efficiency: float = Field(ge=0.0, le=10.0)
    system_security: float = Field(ge=0.0, le=10.0)
    detailed_metrics: dict = Field(default_factory=dict)
    recommendations: list[str] = Field(default_factory=list)


def cost_eval(costs: Sequence[CostModel], dispatch_mw: Sequence[float]):
    """Total cost in $/h and its gradient in $/MWh for a dispatch in MW."""
    total = 0.0
    grad = []
    for c, p in zip(costs, dispatch_mw):
        total += c.c2 * p * p + c.c1 * p + c.c0
        grad.append(2.0 * c.c2 * p + c.c1)
    return total, grad


# ---------------------------------------------------------------------------
# model assembly


@dataclass
class _Model:
    net: PowerSystem
    ybus: sp.csr_matrix
    cf: sp.csr_matrix              # from-end incidence over rated branches
    ct: sp.csr_matrix
    yf: sp.csr_matrix              # from-end admittance rows over rated branches
    yt: sp.csr_matrix
    cg: sp.csr_matrix              # gen-to-bus incidence (in-service)
    gen_idx: np.ndarray            # indices of in-service generators
    rated: np.ndarray              # branch indices with rating > 0, in service
    rate_pu2: np.ndarray           # squared ratings in p.u.
    pd: np.ndarray
    qd: np.ndarray
    nb: int
    ng: int
    nr: int
    ref: int
    c2: np.ndarray                 # on p.u. quantities: $/h per (p.u.)^2
    c1: np.ndarray
    c0: np.ndarray
    vmin: np.ndarray
    vmax: np.ndarray
    pmin: np.ndarray
    pmax: np.ndarray
    qmin: np.ndarray
    qmax: np.ndarray


def _build_model(net: PowerSystem) -> _Model:
    for cm in net.cost_models:
        if cm.c2 < 0:
            raise ModelError(f"nonconvex cost coefficient c2={cm.c2}")

    comps = connected_components(net)
    ref = next((b.index for b in net.buses if b.bus_type is BusType.SLACK), None)
    if ref is None:
        raise ModelError("no slack bus")
    ref_comp = next(c for c in comps if ref in c)
    live = {i for i, b in enumerate(net.buses)}
    if set(ref_comp) != live:
        raise ModelError("network is not connected around its slack bus")

    adm = build_ybus(net)
    nb = net.n_bus
    base = net.base_mva
    gen_idx = np.array([i for i, g in enumerate(net.generators) if g.in_service], dtype=int)
    ng = gen_idx.size
    bus_of_gen = np.array([net.bus_index(net.generators[i].bus_id) for i in gen_idx])
    cg = sp.csr_matrix((np.ones(ng), (bus_of_gen, np.arange(ng))), shape=(nb, ng))

    rated = np.array([i for i, br in enumerate(net.branches)
                      if br.in_service and br.rating_mva > 0], dtype=int)
    nr = rated.size
    f_idx = adm.f_idx[rated]
    t_idx = adm.t_idx[rated]
    cf = sp.csr_matrix((np.ones(nr), (np.arange(nr), f_idx)), shape=(nr, nb))
    ct = sp.csr_matrix((np.ones(nr), (np.arange(nr), t_idx)), shape=(nr, nb))
    yf = sp.csr_matrix((np.concatenate([adm.yff[rated], adm.yft[rated]]),
                        (np.concatenate([np.arange(nr), np.arange(nr)]),
                         np.concatenate([f_idx, t_idx]))), shape=(nr, nb))
    yt = sp.csr_matrix((np.concatenate([adm.ytf[rated], adm.ytt[rated]]),
                        (np.concatenate([np.arange(nr), np.arange(nr)]),
                         np.concatenate([f_idx, t_idx]))), shape=(nr, nb))

    gens = [net.generators[i] for i in gen_idx]
    costs = [net.cost_models[i] for i in gen_idx]
    return _Model(
        net=net, ybus=adm.ybus, cf=cf, ct=ct, yf=yf, yt=yt, cg=cg,
        gen_idx=gen_idx, rated=rated,
        rate_pu2=(np.array([net.branches[i].rating_mva for i in rated]) / base) ** 2,
        pd=np.array([b.pd_mw for b in net.buses]) / base,
        qd=np.array([b.qd_mvar for b in net.buses]) / base,
        nb=nb, ng=ng, nr=nr, ref=ref,
        c2=np.array([c.c2 for c in costs]) * base * base,
        c1=np.array([c.c1 for c in costs]) * base,
        c0=np.array([c.c0 for c in costs]),
        vmin=np.array([b.vmin_pu for b in net.buses]),
        vmax=np.array([b.vmax_pu for b in net.buses]),
        pmin=np.array([g.pmin_mw for g in gens]) / base,
        pmax=np.array([g.pmax_mw for g in gens]) / base,
        qmin=np.array([g.qmin_mvar for g in gens]) / base,
        qmax=np.array([g.qmax_mvar for g in gens]) / base,
    )


def _split(m: _Model, x: np.ndarray):
    nb, ng = m.nb, m.ng
    return (x[:nb], x[nb:2 * nb], x[2 * nb:2 * nb + ng], x[2 * nb + ng:2 * nb + 2 * ng])


def _objective(m: _Model, x):
    _, _, pg, _ = _split(m, x)
    f = float(np.sum(m.c2 * pg * pg + m.c1 * pg + m.c0))
    grad = np.zeros_like(x)
    grad[2 * m.nb:2 * m.nb + m.ng] = 2 * m.c2 * pg + m.c1
    return f, grad


def _equalities(m: _Model, x):
    va, vm, pg, qg = _split(m, x)
    v = vm * np.exp(1j * va)
    s = v * np.conj(m.ybus @ v)
    g_p = s.real + m.pd - m.cg @ pg
    g_q = s.imag + m.qd - m.cg @ qg
    g_ref = np.array([va[m.ref]])
    return np.concatenate([g_p, g_q, g_ref]), v


def _equality_jac(m: _Model, x, v):
    nb, ng = m.nb, m.ng
    vm = np.abs(v)
    ibus = m.ybus @ v
    diag_v = sp.diags(v)
    diag_i = sp.diags(ibus)
    diag_vn = sp.diags(v / vm)
    ds_dva = 1j * diag_v @ (diag_i - m.ybus @ diag_v).conj()
    ds_dvm = diag_v @ (m.ybus @ diag_vn).conj() + diag_i.conj() @ diag_vn

    zero_bg = sp.csr_matrix((nb, ng))
    j_p = sp.hstack([ds_dva.real, ds_dvm.real, -m.cg, zero_bg])
    j_q = sp.hstack([ds_dva.imag, ds_dvm.imag, zero_bg, -m.cg])
    ref_row = sp.csr_matrix((np.ones(1), (np.zeros(1, dtype=int), np.array([m.ref]))),
                            shape=(1, 2 * nb + 2 * ng))
    return sp.vstack([j_p, j_q, ref_row], format="csr"), ds_dva, ds_dvm


def _inequalities(m: _Model, x, v):
    va, vm, pg, qg = _split(m, x)
    parts = [vm - m.vmax, m.vmin - vm, pg - m.pmax, m.pmin - pg,
             qg - m.qmax, m.qmin - qg]
    if m.nr:
        sf = (m.cf @ v) * np.conj(m.yf @ v)
        st = (m.ct @ v) * np.conj(m.yt @ v)
        parts.append(np.abs(sf) ** 2 - m.rate_pu2)
        parts.append(np.abs(st) ** 2 - m.rate_pu2)
    else:
        sf = st = np.zeros(0, dtype=complex)
    return np.concatenate(parts), sf, st


def _branch_jacobians(m: _Model, v, sf, st):
    """dSf/dV and dSt/dV over rated branches (complex sparse)."""
    vm = np.abs(v)
    diag_v = sp.diags(v)
    diag_vn = sp.diags(v / vm)
    if_ = m.yf @ v
    it_ = m.yt @ v
    dsf_dva = 1j * (sp.diags(np.conj(if_)) @ m.cf @ diag_v
                    - sp.diags(m.cf @ v) @ (m.yf @ diag_v).conj())
    dsf_dvm = (sp.diags(m.cf @ v) @ (m.yf @ diag_vn).conj()
               + sp.diags(np.conj(if_)) @ m.cf @ diag_vn)
    dst_dva = 1j * (sp.diags(np.conj(it_)) @ m.ct @ diag_v
                    - sp.diags(m.ct @ v) @ (m.yt @ diag_v).conj())
    dst_dvm = (sp.diags(m.ct @ v) @ (m.yt @ diag_vn).conj()
               + sp.diags(np.conj(it_)) @ m.ct @ diag_vn)
    return dsf_dva, dsf_dvm, dst_dva, dst_dvm


def _inequality_jac(m: _Model, x, v, sf, st):
    nb, ng, nr = m.nb, m.ng, m.nr
    nx = 2 * nb + 2 * ng
    eye_b = sp.identity(nb, format="csr")
    eye_g = sp.identity(ng, format="csr")
    zb = sp.csr_matrix((nb, nb))
    zbg = sp.csr_matrix((nb, ng))
    zgb = sp.csr_matrix((ng, nb))
    zg = sp.csr_matrix((ng, ng))

    rows = [
        sp.hstack([zb, eye_b, zbg, zbg]),          # vm <= vmax
        sp.hstack([zb, -eye_b, zbg, zbg]),         # vmin <= vm
        sp.hstack([zgb, zgb, eye_g, zg]),          # pg <= pmax
        sp.hstack([zgb, zgb, -eye_g, zg]),         # pmin <= pg
        sp.hstack([zgb, zgb, zg, eye_g]),          # qg <= qmax
        sp.hstack([zgb, zgb, zg, -eye_g]),         # qmin <= qg
    ]
    if nr:
        dsf_dva, dsf_dvm, dst_dva, dst_dvm = _branch_jacobians(m, v, sf, st)
        # d|S|^2 = 2 (P dP + Q dQ)
        def asqr(s, dva, dvm):
            dp = sp.diags(s.real)
            dq = sp.diags(s.imag)
            da = 2 * (dp @ dva.real + dq @ dva.imag)
            dv = 2 * (dp @ dvm.real + dq @ dvm.imag)
            return sp.hstack([da, dv, sp.csr_matrix((nr, 2 * ng))])
        rows.append(asqr(sf, dsf_dva, dsf_dvm))
        rows.append(asqr(st, dst_dva, dst_dvm))
        branch_jacs = (dsf_dva, dsf_dvm, dst_dva, dst_dvm)
    else:
        branch_jacs = None
    return sp.vstack(rows, format="csr"), branch_jacs


def _d2sbus(ybus, v, lam):
    """Second derivatives of bus injections weighted by ``lam`` (complex)."""
    n = len(v)
    ibus = ybus @ v
    diag_lam = sp.diags(lam)
    diag_v = sp.diags(v)
    a = sp.diags(lam * v)
    b = ybus @ diag_v
    c = a @ b.conj()
    d = ybus.conj().T @ diag_v
    e = diag_v.conj() @ (d @ diag_lam - sp.diags(d @ lam))
    f = c - a @ sp.diags(np.conj(ibus))
    g = sp.diags(1.0 / np.abs(v))
    gaa = e + f
    gva = 1j * g @ (e - f)
    gav = gva.T
    gvv = g @ (c + c.T) @ g
    return gaa, gav, gva, gvv


def _d2sbr(cbr, ybr, v, lam):
    """Second derivatives of branch complex flows weighted by ``lam``."""
    diag_lam = sp.diags(lam)
    diag_v = sp.diags(v)
    a = ybr.conj().T @ diag_lam @ cbr
    b = diag_v.conj() @ a @ diag_v
    d = sp.diags((a @ v) * np.conj(v))
    e = sp.diags((a.T @ np.conj(v)) * v)
    f = b + b.T
    g = sp.diags(1.0 / np.abs(v))
    haa = f - d - e
    hva = 1j * g @ (b - b.T - d + e)
    hav = hva.T
    hvv = g @ f @ g
    return haa, hav, hva, hvv


def _d2asqr(dsdva, dsdvm, s, cbr, ybr, v, lam):
    """Second derivatives of |S|^2 weighted by ``lam`` (real)."""
    diaglam = sp.diags(lam)
    saa, sav, sva, svv = _d2sbr(cbr, ybr, v, np.conj(s) * lam)
    haa = 2 * (saa + (dsdva.T @ diaglam @ dsdva.conj())).real
    hvv = 2 * (svv + (dsdvm.T @ diaglam @ dsdvm.conj())).real
    hav = 2 * (sav + (dsdva.T @ diaglam @ dsdvm.conj())).real
    hva = 2 * (sva + (dsdvm.T @ diaglam @ dsdva.conj())).real
    return haa, hav, hva, hvv


def _lagrangian_hessian(m: _Model, x, v, lam, mu, sf, st, branch_jacs):
    nb, ng, nr = m.nb, m.ng, m.nr
    lam_p = lam[:nb]
    lam_q = lam[nb:2 * nb]

    gaa_p, gav_p, gva_p, gvv_p = _d2sbus(m.ybus, v, lam_p)
    gaa_q, gav_q, gva_q, gvv_q = _d2sbus(m.ybus, v, lam_q)
    haa = gaa_p.real + gaa_q.imag
    hav = gav_p.real + gav_q.imag
    hva = gva_p.real + gva_q.imag
    hvv = gvv_p.real + gvv_q.imag

    if nr:
        dsf_dva, dsf_dvm, dst_dva, dst_dvm = branch_jacs
        mu_f = mu[2 * nb + 4 * ng:2 * nb + 4 * ng + nr]
        mu_t = mu[2 * nb + 4 * ng + nr:]
        for (dva, dvm, s, cbr, ybr, lam_b) in (
                (dsf_dva, dsf_dvm, sf, m.cf, m.yf, mu_f),
                (dst_dva, dst_dvm, st, m.ct, m.yt, mu_t)):
            baa, bav, bva, bvv = _d2asqr(dva, dvm, s, cbr, ybr, v, lam_b)
            haa = haa + baa
            hav = hav + bav
            hva = hva + bva
            hvv = hvv + bvv

    d2f_pg = sp.diags(2.0 * m.c2)
    top = sp.hstack([haa, hav, sp.csr_matrix((nb, 2 * ng))])
    mid = sp.hstack([hva, hvv, sp.csr_matrix((nb, 2 * ng))])
    bot = sp.hstack([sp.csr_matrix((2 * ng, 2 * nb)),
                     sp.block_diag([d2f_pg, sp.csr_matrix((ng, ng))])])
    return sp.vstack([top, mid, bot], format="csc").real


# ---------------------------------------------------------------------------
# interior point loop


def solve_acopf(net: PowerSystem, options: Optional[OpfOptions] = None,
                thresholds: Optional[ValidationThresholds] = None) -> ACOPFSolution:
    """Primal-dual interior-point ACOPF.

    Returns ``solved=False`` with a diagnostic message when the iteration
    budget exhausts; raises :class:`ModelError` only for malformed input.
    """
    opt = options or OpfOptions()
    th = thresholds or ValidationThresholds()
    m = _build_model(net)
    nb, ng, nr = m.nb, m.ng, m.nr
    nx = 2 * nb + 2 * ng

    # flat-start primal initialization, generator P at midpoint of limits
    x = np.zeros(nx)
    x[nb:2 * nb] = np.clip(1.0, m.vmin, m.vmax)
    x[2 * nb:2 * nb + ng] = (m.pmin + m.pmax) / 2.0
    x[2 * nb + ng:] = (m.qmin + m.qmax) / 2.0

    g, v = _equalities(m, x)
    h, sf, st = _inequalities(m, x, v)
    ni = h.size

    z = np.maximum(1.0, -h)
    mu = 1.0 / z
    lam = np.zeros(g.size)
    gamma = float(z @ mu) / ni

    f_prev = None
    message = ""
    solved = False
    it = 0
    for it in range(opt.max_iterations + 1):
        f_val, grad_f = _objective(m, x)
        jg, ds_dva, ds_dvm = _equality_jac(m, x, v)
        jh, branch_jacs = _inequality_jac(m, x, v, sf, st)

        lx = grad_f + jg.T @ lam + jh.T @ mu

        feascond = max(np.max(np.abs(g)), np.max(h.max(initial=0.0), initial=0.0)) / \
            (1.0 + max(np.max(np.abs(x)), np.max(np.abs(z))))
        gradcond = np.max(np.abs(lx)) / (1.0 + max(np.max(np.abs(lam), initial=0.0),
                                                   np.max(np.abs(mu), initial=0.0)))
        compcond = float(z @ mu) / (1.0 + np.max(np.abs(x)))
        if feascond < opt.tol and gradcond < opt.tol and compcond < opt.tol:
            solved = True
            message = f"converged in {it} iterations (scaled KKT residuals < {opt.tol:g})"
            break
        if it >= opt.max_iterations:
            message = (f"iteration budget {opt.max_iterations} exhausted; "
                       f"feasibility {feascond:.2e}, gradient {gradcond:.2e}, "
                       f"complementarity {compcond:.2e}")
            break

        hess = _lagrangian_hessian(m, x, v, lam, mu, sf, st, branch_jacs)
        zinv_mu = mu / z
        big_m = hess + (jh.T @ sp.diags(zinv_mu) @ jh)
        n_vec = lx + jh.T @ ((gamma + mu * (h + z)) / z) - jh.T @ mu

        kkt = sp.vstack([
            sp.hstack([big_m, jg.T]),
            sp.hstack([jg, sp.csr_matrix((g.size, g.size))]),
        ], format="csc")
        rhs = -np.concatenate([n_vec, g])
        try:
            sol_v = splu(kkt).solve(rhs)
        except RuntimeError as exc:
            message = f"KKT system factorization failed: {exc}"
            break
        dx = sol_v[:nx]
        dlam = sol_v[nx:]

        dz = -h - z - jh @ dx
        dmu = (gamma - mu * z - mu * dz) / z

        alpha_p = 1.0
        neg = dz < 0
        if np.any(neg):
            alpha_p = min(1.0, opt.xi * np.min(-z[neg] / dz[neg]))
        alpha_d = 1.0
        neg = dmu < 0
        if np.any(neg):
            alpha_d = min(1.0, opt.xi * np.min(-mu[neg] / dmu[neg]))

        x = x + alpha_p * dx
        z = z + alpha_p * dz
        lam = lam + alpha_d * dlam
        mu = mu + alpha_d * dmu

        g, v = _equalities(m, x)
        h, sf, st = _inequalities(m, x, v)
        gamma = opt.sigma * float(z @ mu) / ni
        f_prev = f_val

    return _package_solution(net, m, x, solved, it, message, opt, th)


def _package_solution(net: PowerSystem, m: _Model, x, solved, iterations,
                      message, opt: OpfOptions, th: ValidationThresholds) -> ACOPFSolution:
    base = net.base_mva
    va, vm, pg, qg = _split(m, x)

    gen_p = np.zeros(net.n_gen)
    gen_q = np.zeros(net.n_gen)
    for k, gi in enumerate(m.gen_idx):
        gen_p[gi] = pg[k] * base
        gen_q[gi] = qg[k] * base

    dispatch_cost, _ = cost_eval([net.cost_models[i] for i in m.gen_idx],
                                 [gen_p[i] for i in m.gen_idx])

    flows, losses, max_loading = compute_flows(net, vm, va)
    loading_records = []
    for i in m.rated:
        bf = flows[i]
        rating = net.branches[i].rating_mva
        mva_f = float(np.hypot(bf.p_from_mw, bf.q_from_mvar))
        mva_t = float(np.hypot(bf.p_to_mw, bf.q_to_mvar))
        loading_records.append(BranchLoadingRecord(
            index=i, from_bus=bf.from_bus, to_bus=bf.to_bus, mva_from=mva_f,
            mva_to=mva_t, rating_mva=rating,
            loading_percent=max(mva_f, mva_t) / rating * 100.0))

    margins = _constraint_margins(net, m, x)

    g, _ = _equalities(m, x)
    max_mismatch = float(np.max(np.abs(g[:2 * m.nb]))) if m.nb else 0.0

    return ACOPFSolution(
        case_name=net.case_name,
        solved=solved,
        objective_cost=float(dispatch_cost),
        gen_dispatch_mw={_gen_key(net, i): float(gen_p[i]) for i in range(net.n_gen)},
        gen_dispatch_mvar={_gen_key(net, i): float(gen_q[i]) for i in range(net.n_gen)},
        branch_loading=loading_records,
        min_voltage_pu=float(vm.min()),
        max_voltage_pu=float(vm.max()),
        losses_mw=float(losses),
        constraint_margins=margins,
        iterations=iterations,
        convergence_message=message,
        solved_at=time.time(),
        vm_pu=[float(t) for t in vm],
        va_deg=[float(t) for t in np.rad2deg(va)],
        gen_p_mw=[float(t) for t in gen_p],
        gen_q_mvar=[float(t) for t in gen_q],
        max_loading_percent=float(max_loading),
        max_balance_mismatch_pu=max_mismatch,
    )


def _gen_key(net: PowerSystem, i: int) -> str:
    return f"gen{i}@bus{net.generators[i].bus_id}"


def apply_dispatch(net: PowerSystem, sol: ACOPFSolution) -> PowerSystem:
    """Network with generator setpoints (P, Q, V) taken from a solved ACOPF.

    The returned network reproduces the optimal state under a plain power
    flow; contingency sweeps start from it.
    """
    from dataclasses import replace
    if not sol.solved:
        raise UnsolvedInput("cannot apply an unsolved dispatch")
    vm = {b.id: sol.vm_pu[b.index] for b in net.buses} if sol.vm_pu else {}
    gens = []
    for i, g in enumerate(net.generators):
        if not g.in_service:
            gens.append(g)
            continue
        gens.append(replace(g, pg_mw=sol.gen_p_mw[i], qg_mvar=sol.gen_q_mvar[i],
                            vg_pu=vm.get(g.bus_id, g.vg_pu)))
    return replace(net, generators=tuple(gens))


def _constraint_margins(net: PowerSystem, m: _Model, x) -> list[ConstraintMargin]:
    va, vm, pg, qg = _split(m, x)
    v = vm * np.exp(1j * va)
    base = net.base_mva
    out: list[ConstraintMargin] = []
    for i, b in enumerate(net.buses):
        out.append(ConstraintMargin(name=f"vmax_bus{b.id}", margin=float(m.vmax[i] - vm[i])))
        out.append(ConstraintMargin(name=f"vmin_bus{b.id}", margin=float(vm[i] - m.vmin[i])))
    for k, gi in enumerate(m.gen_idx):
        gid = _gen_key(net, gi)
        out.append(ConstraintMargin(name=f"pmax_{gid}", margin=float((m.pmax[k] - pg[k]) * base)))
        out.append(ConstraintMargin(name=f"pmin_{gid}", margin=float((pg[k] - m.pmin[k]) * base)))
        out.append(ConstraintMargin(name=f"qmax_{gid}", margin=float((m.qmax[k] - qg[k]) * base)))
        out.append(ConstraintMargin(name=f"qmin_{gid}", margin=float((qg[k] - m.qmin[k]) * base)))
    if m.nr:
        sf = (m.cf @ v) * np.conj(m.yf @ v)
        st = (m.ct @ v) * np.conj(m.yt @ v)
        for k, bi in enumerate(m.rated):
            br = net.branches[bi]
            rating = br.rating_mva
            out.append(ConstraintMargin(
                name=f"rate_from_br{bi}",
                margin=float(rating - abs(sf[k]) * base)))
            out.append(ConstraintMargin(
                name=f"rate_to_br{bi}",
                margin=float(rating - abs(st[k]) * base)))
    return out


# ---------------------------------------------------------------------------
# quality assessment


def economic_dispatch_bound(net: PowerSystem) -> float:
    """Cost lower bound: merit-order dispatch of total demand ignoring the network."""
    demand = net.total_load_mw()
    gens = [(i, g) for i, g in enumerate(net.generators) if g.in_service]
    lo = sum(g.pmin_mw for _, g in gens)
    hi = sum(g.pmax_mw for _, g in gens)
    demand = min(max(demand, lo), hi)

    def dispatch_at(lam: float):
        total = 0.0
        ps = []
        for i, g in gens:
            c = net.cost_models[i]
            if c.c2 > 0:
                p = (lam - c.c1) / (2 * c.c2 * 1.0)
            else:
                p = g.pmax_mw if lam >= c.c1 else g.pmin_mw
            p = min(max(p, g.pmin_mw), g.pmax_mw)
            ps.append((i, p))
            total += p
        return total, ps

    lam_lo, lam_hi = 0.0, 1e4
    for _ in range(200):
        mid = (lam_lo + lam_hi) / 2
        total, ps = dispatch_at(mid)
        if total < demand:
            lam_lo = mid
        else:
            lam_hi = mid
    _, ps = dispatch_at((lam_lo + lam_hi) / 2)
    cost, _ = cost_eval([net.cost_models[i] for i, _ in ps], [p for _, p in ps])
    return cost


def assess_quality(sol: ACOPFSolution, net: PowerSystem,
                   weights: Optional[QualityWeights] = None,
                   options: Optional[OpfOptions] = None,
                   thresholds: Optional[ValidationThresholds] = None) -> SolutionQuality:
    """Deterministic scoring of a solved ACOPF result on four 0-10 axes."""
    if not sol.solved:
        raise UnsolvedInput("cannot assess an unsolved ACOPF result")
    w = weights or QualityWeights()
    opt = options or OpfOptions()
    th = thresholds or ValidationThresholds()

    convergence = 10.0 * max(0.0, 1.0 - sol.iterations / opt.max_iterations)

    # worst margin normalized by a per-constraint scale; constraints binding
    # at the optimum (margin ~ 0) are satisfied, only violations score down
    worst_frac = np.inf
    for cm in sol.constraint_margins:
        scale = _margin_scale(cm.name, net)
        if scale > 0:
            worst_frac = min(worst_frac, cm.margin / scale)
    if not np.isfinite(worst_frac):
        worst_frac = 1.0
    violation_frac = max(0.0, -worst_frac)
    constraint = 10.0 * max(0.0, 1.0 - violation_frac / 0.10)

    bound = economic_dispatch_bound(net)
    economics = 10.0 * min(1.0, max(0.0, bound / sol.objective_cost)) if sol.objective_cost > 0 else 10.0

    v_head = min(sol.min_voltage_pu - max(b.vmin_pu for b in net.buses),
                 min(b.vmax_pu for b in net.buses) - sol.max_voltage_pu)
    v_score = min(1.0, max(0.0, v_head / 0.05))
    th_head = (th.thermal_warn_percent - sol.max_loading_percent) / th.thermal_warn_percent
    th_score = min(1.0, max(0.0, th_head / 0.10))
    security = 10.0 * min(v_score, th_score)

    recommendations: list[str] = []
    for rec in sol.branch_loading:
        if rec.loading_percent >= 95.0:
            recommendations.append(
                f"Branch {rec.index} ({rec.from_bus}-{rec.to_bus}) is at "
                f"{rec.loading_percent:.1f}% of its {rec.rating_mva:.0f} MVA rating; "
                "consider reinforcement or re-dispatch.")
    for cm in sol.constraint_margins:
        if cm.name.startswith("vmin_bus") and cm.margin < 0.01:
            recommendations.append(
                f"Voltage at {cm.name.removeprefix('vmin_')} is within 0.01 p.u. of its "
                "lower limit; consider reactive support.")
    if not recommendations:
        recommendations.append("No constraint is near binding; normal operation.")

    overall = (w.convergence * convergence + w.constraints * constraint
               + w.economics * economics + w.security * security) / \
        (w.convergence + w.constraints + w.economics + w.security)

    return SolutionQuality(
        overall_score=round(overall, 6),
        convergence_quality=round(convergence, 6),
        constraint_satisfaction=round(constraint, 6),
        economic_efficiency=round(economics, 6),
        system_security=round(security, 6),
        detailed_metrics={
            "iterations": sol.iterations,
            "objective_cost": sol.objective_cost,
            "economic_dispatch_bound": bound,
            "max_loading_percent": sol.max_loading_percent,
            "min_voltage_pu": sol.min_voltage_pu,
            "max_voltage_pu": sol.max_voltage_pu,
            "losses_mw": sol.losses_mw,
        },
        recommendations=recommendations,
    )


def _margin_scale(name: str, net: PowerSystem) -> float:
    if name.startswith(("vmax", "vmin")):
        return 1.0
    if name.startswith(("pmax", "pmin")):
        return max(g.pmax_mw - g.pmin_mw for g in net.generators) or 1.0
    if name.startswith(("qmax", "qmin")):
        return max(g.qmax_mvar - g.qmin_mvar for g in net.generators) or 1.0
    if name.startswith("rate"):
        ratings = [br.rating_mva for br in net.branches if br.rating_mva > 0]
        return max(ratings) if ratings else 1.0
    return 1.0
