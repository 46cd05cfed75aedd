"""Experiment drivers: each turns a config into named data files and figure specs."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..circuits import build_trotter_circuit
from ..dualsim import (DualIsing1D, evolve_hamiltonian, imbalance_curve, run_disorder,
                       sample_sectors)
from ..entropy import background_subtract, entropy_csv, generate_batch, purity, renyi2_from_purity, windows
from ..groverpe import cost_compare, cost_csv, fit_exponent, lgt_instance
from ..lattice import DUAL, LGT, build_lattice, snake_order
from ..mps import MPSEvolver, expect_pauli, fit_required_chi, mps_from_product, scaling_json, truncation_csv
from ..noise_mitigation import NoiseModel, mitigation_csv, run_mitigation, yield_csv
from ..observables import (InitialStateSpec, center_contrast, gauge_bloch, lgt_terms, matter_bloch,
                           measure_direct, measure_dual_basis, prepare_state, stack_tables)
from ..statevector import PauliTerm, apply_circuit, subsystem_purity
from .config import ExperimentConfig


@dataclass
class Figure:
    """Data for one rendered figure; ``kind`` selects the plotting routine."""

    name: str
    kind: str
    data: dict


@dataclass
class RunOutput:
    files: dict = field(default_factory=dict)
    figures: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _energy_csv(table, g, mu) -> str:
    return _csv(["cycle", "link", "x", "zint", "mu_part", "energy"], table.energy_profile_rows(g, mu))


def _contrast_fig(name, times, curves: dict, center: int, xlabel="cycle", logx=False) -> Figure:
    return Figure(name, "lines", {"x": list(map(float, times)), "series": {k: list(map(float, v)) for k, v in curves.items()},
                                  "xlabel": xlabel, "ylabel": f"contrast at link {center}", "logx": logx})


def run_dynamics(cfg: ExperimentConfig) -> RunOutput:
    g = build_lattice(cfg.lattice)
    p = cfg.trotter
    kind = cfg.engine["kind"]
    out = RunOutput()
    center = cfg.options.get("center_link", g.center_link())
    if kind == "statevector":
        psi = prepare_state(cfg.initial_state, g)
        step = build_trotter_circuit(g, p, cycles=1, merge=False)
        meas = measure_dual_basis if cfg.options.get("readout") == "dual_basis" else measure_direct
        rows = []
        for c in range(p.cycles + 1):
            rows.append(meas(psi, g))
            if c < p.cycles:
                psi = apply_circuit(psi, step)
        table = stack_tables(rows, np.arange(p.cycles + 1), g, p.J, p.h, p.mu, p.Q)
    elif kind == "dual":
        prep = prepare_state(cfg.initial_state, g)
        run = run_disorder(g, p, prep.gauge_bloch, prep.weighting, samples=cfg.engine.get("samples", 2000), seed=cfg.seed)
        table = run.table
        if run.monte_carlo:
            out.files["sectors.json"] = json.dumps({"sectors": run.sectors.tolist(), "weights": run.weights.tolist()})
    else:
        table, extra = _mps_dynamics(cfg, g)
        out.files.update(extra)
    out.files["observables.csv"] = table.to_csv()
    out.files["energy.csv"] = _energy_csv(table, g, p.mu)
    ctr = center_contrast(table.energy, center)
    out.figures.append(Figure("energy_map", "heatmap", {"z": table.energy.tolist(), "xlabel": "link", "ylabel": "cycle",
                                                        "label": "energy per link"}))
    out.figures.append(_contrast_fig("contrast", table.times, {"contrast": ctr}, center))
    out.summary = {"cycles": p.cycles, "final_contrast": float(ctr[-1]), "initial_contrast": float(ctr[0])}
    return out


def _mps_dynamics(cfg: ExperimentConfig, g):
    p = cfg.trotter
    init = cfg.initial_state
    order = snake_order(g, LGT)
    bl = matter_bloch(init, g) + gauge_bloch(init, g)
    psi = mps_from_product(order, bl, cfg.engine["chi"])
    ev = MPSEvolver(g, p, order)
    if init.gauge == "Aligned":
        ev.prepare_ub(psi)
    run = ev.run(psi, p.cycles)
    terms = lgt_terms(g)
    rows = []
    for st in run.states:
        rows.append({k: np.array([t.coefficient * expect_pauli(st, t.factors) for t in ts]) for k, ts in terms.items()})
    table = stack_tables(rows, np.arange(p.cycles + 1), g, p.J, p.h, p.mu, p.Q)
    fid = _csv(["cycle", "fidelity_proxy", "per_gauge_qubit", "max_entropy"],
               [(c, run.proxies[c], run.proxies[c] ** (1 / g.n_gauge), run.max_entropy[c]) for c in range(p.cycles + 1)])
    return table, {"truncation.csv": truncation_csv(run.log), "fidelity.csv": fid}


def _entropy_states(cfg: ExperimentConfig, g):
    """Initial states with weights; ``options.disorder`` draws random +-x matter."""
    k = int(cfg.options.get("disorder", 0))
    if k == 0:
        return [prepare_state(cfg.initial_state, g)]
    rng = np.random.default_rng(cfg.seed)
    states = []
    base = cfg.initial_state
    for _ in range(k):
        m = tuple((float(s), 0.0, 0.0) for s in rng.choice([-1, 1], size=g.n_matter))
        spec = InitialStateSpec("Explicit", base.gauge, base.J, base.h, base.flips, base.theta, m, base.frame)
        states.append(prepare_state(spec, g))
    return states


def run_entropy(cfg: ExperimentConfig) -> RunOutput:
    g = build_lattice(cfg.lattice)
    p = cfg.trotter
    n = g.n_qubits
    order = list(snake_order(g, LGT).order)
    sizes = cfg.options.get("sizes", list(range(1, n // 2 + 1)))
    states = _entropy_states(cfg, g)
    step = build_trotter_circuit(g, p, cycles=1, merge=False)
    randomized = cfg.settings is not None
    rows, half = [], []
    for c in range(p.cycles + 1):
        pur, err = {}, {}
        if randomized:
            # one batch per disorder realization; purity() pools them
            batches = [generate_batch(s, cfg.settings, cfg.shots, seed=(cfg.seed * 1009 + c) * 131 + k)
                       for k, s in enumerate(states)]
        for L in sorted(set(sizes) | {n}):
            ws = windows(order, L, periodic=g.kind == "Ring1D")
            if randomized:
                est = [purity(batches, w) for w in ws]
                pur[L] = float(np.mean([e.value for e in est]))
                err[L] = float(np.mean([e.stderr for e in est]))
            else:
                pur[L] = float(np.mean([np.mean([subsystem_purity(s, w) for s in states]) for w in ws]))
                err[L] = 0.0
        s_full = renyi2_from_purity(max(pur[n], 1e-300))
        raw = [renyi2_from_purity(max(pur[L], 1e-300)) for L in sizes]
        mit = background_subtract(raw, sizes, s_full, n)
        for L, r, m in zip(sizes, raw, mit):
            se = err[L] / (pur[L] * math.log(2)) if pur[L] > 0 else float("nan")
            rows.append((c, L, r, m, se))
        if n // 2 in sizes:
            half.append(raw[sizes.index(n // 2)])
        if c < p.cycles:
            states = [apply_circuit(s, step) for s in states]
    out = RunOutput()
    out.files["entropy.csv"] = entropy_csv(rows)
    by_cycle = {}
    for c, L, r, m, _ in rows:
        by_cycle.setdefault(c, []).append(r)
    out.figures.append(Figure("entropy_vs_size", "lines",
                              {"x": list(map(float, sizes)), "series": {f"cycle {c}": v for c, v in by_cycle.items()},
                               "xlabel": "subsystem size L", "ylabel": "S2 (bits)", "logx": False}))
    if half:
        out.figures.append(Figure("half_chain", "lines", {"x": list(range(len(half))), "series": {"S2(N/2)": half},
                                                          "xlabel": "cycle", "ylabel": "S2 (bits)", "logx": False}))
        out.summary["final_half_chain"] = half[-1]
    return out


def run_imbalance(cfg: ExperimentConfig) -> RunOutput:
    g = build_lattice(cfg.lattice)
    p = cfg.trotter
    thetas = cfg.options.get("thetas", [0.0, math.pi / 8, math.pi / 4, 3 * math.pi / 8, math.pi / 2])
    curves = {float(t): imbalance_curve(float(t), g, p) for t in thetas}
    rows = [(c, t, v[c]) for t, v in curves.items() for c in range(len(v))]
    out = RunOutput()
    out.files["imbalance.csv"] = _csv(["cycle", "theta", "imbalance"], rows)
    out.figures.append(Figure("imbalance", "lines", {"x": list(range(p.cycles + 1)),
                                                     "series": {f"theta={t:.3f}": v.tolist() for t, v in curves.items()},
                                                     "xlabel": "cycle", "ylabel": "imbalance", "logx": False}))
    out.summary = {f"{t:.6f}": float(v[-1]) for t, v in curves.items()}
    return out


def run_long_time(cfg: ExperimentConfig) -> RunOutput:
    g = build_lattice(cfg.lattice)
    p = cfg.trotter
    times = np.array(cfg.options.get("times", [0, 1, 2, 5, 10, 20, 50, 100, 200, 500, 1000]), dtype=float)
    samples = int(cfg.options.get("samples", 32))
    center = cfg.options.get("center_link", g.center_link())
    init = cfg.initial_state
    gb = gauge_bloch(init, g)
    single = evolve_hamiltonian(DualIsing1D.from_lattice(g, np.ones(g.n_matter, dtype=int), p.J, p.h, p.mu), gb, times)
    secs = sample_sectors(g.n_matter, samples, cfg.seed)
    per = np.array([evolve_hamiltonian(DualIsing1D.from_lattice(g, s, p.J, p.h, p.mu), gb, times).energy for s in secs])
    avg = per.mean(axis=0)
    cs = center_contrast(single.energy, center)
    cper = center_contrast(per, center)
    ca = cper.mean(axis=0)
    se = cper.std(axis=0, ddof=1) / math.sqrt(samples) if samples > 1 else np.zeros_like(ca)
    rows = [("single", t, l, single.energy[i, l]) for i, t in enumerate(times) for l in range(g.n_gauge)]
    rows += [("average", t, l, avg[i, l]) for i, t in enumerate(times) for l in range(g.n_gauge)]
    out = RunOutput()
    out.files["energy_time.csv"] = _csv(["state", "time", "link", "energy"], rows)
    out.files["contrast.csv"] = _csv(["time", "single", "average", "average_stderr"],
                                     [(t, cs[i], ca[i], se[i]) for i, t in enumerate(times)])
    out.files["sectors.json"] = json.dumps({"sectors": secs.tolist()})
    tpos = np.maximum(times, times[times > 0].min() / 2 if (times > 0).any() else 1.0)
    out.figures.append(_contrast_fig("contrast", tpos, {"single sector": cs / cs[0], "average": ca / ca[0]}, center,
                                     xlabel="time (1/J)", logx=True))
    out.summary = {"single_final": float(cs[-1] / cs[0]), "average_final": float(ca[-1] / ca[0])}
    return out


def run_mps_scaling(cfg: ExperimentConfig) -> RunOutput:
    g = build_lattice(cfg.lattice)
    p = cfg.trotter
    init = cfg.initial_state
    frame = cfg.options.get("frame", LGT)
    chis = sorted(cfg.options["chis"])
    target = float(cfg.options.get("target", 0.95))
    fit_min = float(cfg.options.get("fit_min_chi", 0))
    order = snake_order(g, frame)
    out = RunOutput()
    records, per_gauge = [], {}
    grid = f"{cfg.lattice.rows}x{cfg.lattice.cols}" if cfg.lattice.kind == "Grid2D" else f"{cfg.lattice.kind}{g.n_matter}"
    for chi in chis:
        if frame == DUAL:
            psi = mps_from_product(order, gauge_bloch(init, g), chi)
            ev = MPSEvolver(g, p, order, sector=cfg.options.get("sector"))
        else:
            psi = mps_from_product(order, matter_bloch(init, g) + gauge_bloch(init, g), chi)
            ev = MPSEvolver(g, p, order)
            if init.gauge == "Aligned":
                ev.prepare_ub(psi)
        run = ev.run(psi, p.cycles)
        per_gauge[chi] = run.proxies ** (1 / g.n_gauge)
        for c in range(p.cycles + 1):
            records.append({"grid": grid, "chi": chi, "cycle": c, "fidelity": float(run.proxies[c]),
                            "fidelity_per_gauge": float(per_gauge[chi][c]), "max_entropy": float(run.max_entropy[c])})
        out.files[f"truncation_chi{chi}.csv"] = truncation_csv(run.log)
    req = []
    for c in range(p.cycles + 1):
        fit = fit_required_chi([(chi, per_gauge[chi][c]) for chi in chis], target, fit_min)
        req.append((c, fit.chi_star, fit.status))
    out.files["scaling.json"] = scaling_json(records)
    out.files["required_chi.csv"] = _csv(["cycle", "chi_star", "status"], req)
    out.figures.append(Figure("fidelity", "lines", {"x": list(range(p.cycles + 1)),
                                                    "series": {f"chi={k}": v.tolist() for k, v in per_gauge.items()},
                                                    "xlabel": "cycle", "ylabel": "fidelity per gauge qubit", "logx": False}))
    out.figures.append(Figure("required_chi", "lines", {"x": [r[0] for r in req], "series": {"required chi": [r[1] for r in req]},
                                                        "xlabel": "cycle", "ylabel": f"chi for f={target}", "logx": False}))
    return out


def run_mitigation_exp(cfg: ExperimentConfig) -> RunOutput:
    g = build_lattice(cfg.lattice)
    p = cfg.trotter
    nz = cfg.noise
    noise = NoiseModel.uniform(g.n_qubits, nz.get("p2", 0.0), nz.get("e01", 0.0), nz.get("e10", 0.0), seed=cfg.seed)
    res = run_mitigation(g, p, cfg.initial_state, noise, p.cycles, nz.get("trajectories", 200),
                         nz.get("shots_per_trajectory", 10), nz.get("blocks", 20), cfg.options.get("postselect", "Global"))
    out = RunOutput()
    out.files["mitigation.csv"] = mitigation_csv(res)
    out.files["yield.csv"] = yield_csv([(c, cfg.options.get("postselect", "Global"), "all", y) for c, y in enumerate(res.yields)])
    out.files["decay_fits.json"] = json.dumps({k: {"a": f.a, "b": f.b, "status": f.status, "rms_residual": f.residual,
                                                   "max_residual": f.max_residual} for k, f in sorted(res.fits.items())},
                                              indent=1)
    center = cfg.options.get("center_link", g.center_link())
    cyc = list(range(p.cycles + 1))
    out.figures.append(Figure("mitigation", "lines", {"x": cyc, "series": {"exact": res.exact[:, center].tolist(),
                                                                          "raw": res.raw[:, center].tolist(),
                                                                          "mitigated": res.energy[:, center].tolist()},
                                                      "xlabel": "cycle", "ylabel": f"energy at link {center}", "logx": False}))
    out.summary = {"max_abs_z": float(np.abs(res.zscores()).max()), "clipped": res.clipped}
    return out


def run_grover_cost(cfg: ExperimentConfig) -> RunOutput:
    g = build_lattice(cfg.lattice)
    p = cfg.trotter
    link = cfg.options.get("link", g.center_link())
    O = PauliTerm.of((g.link_qubit(link), cfg.options.get("axis", "X")))
    gamma = lgt_instance(g, p, p.cycles, O, gauge_angle=float(cfg.options.get("gauge_angle", 0.7)))
    eps = list(cfg.options["eps"])
    rows = cost_compare(eps, gamma, seed=cfg.seed)
    out = RunOutput()
    out.files["cost.csv"] = cost_csv(rows)
    ex_naive = fit_exponent(eps, [r.naive_shots for r in rows])
    ex_pe = fit_exponent(eps, [r.pe_applications for r in rows])
    out.files["exponents.json"] = json.dumps({"naive": ex_naive, "phase_estimation": ex_pe, "exact": gamma.expectation}, indent=1)
    out.figures.append(Figure("cost", "lines", {"x": [1 / e for e in eps],
                                                "series": {"naive shots": [r.naive_shots for r in rows],
                                                           "PE applications": [r.pe_applications for r in rows]},
                                                "xlabel": "1/eps", "ylabel": "count", "logx": True, "logy": True}))
    out.summary = {"naive_exponent": ex_naive, "pe_exponent": ex_pe}
    return out


DRIVERS = {
    "dynamics": run_dynamics,
    "entropy": run_entropy,
    "imbalance": run_imbalance,
    "long_time": run_long_time,
    "mps_scaling": run_mps_scaling,
    "mitigation": run_mitigation_exp,
    "grover_cost": run_grover_cost,
}


def execute(cfg: ExperimentConfig) -> RunOutput:
    return DRIVERS[cfg.experiment](cfg)
