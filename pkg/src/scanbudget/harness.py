"""Configuration-driven experiment driver.

Reproduces the core comparisons: the seven-method equal-budget benchmark,
the beam-current sweep, and the dictionary-sensitivity study, with CSV/JSON
reports and side-by-side ROI montages. Everything derives its randomness
from the master seed, so a config re-run is byte-identical.

Seed derivation (all through numpy SeedSequence spawning, documented here):
acquisitions use [master, 101, current_index, strategy_index]; seeded
reconstructions use [master, 202, current_index, method_index]; automatic
training data uses [master, 303, tag].
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysisop, bpfa, ebi, interpolation, superres
from .acquisition import (
    BeamModel, ScanBudget, SeededRng, average_dwell, downscale_by_two,
    simulate_frame, sparse_scan,
)
from .errors import ConfigError, NumericalError
from .image import Image, Rect, SparseImage, crop, extract_patches, \
    gaussian_smooth, load_image, save_image
from .metrics import METRIC_NAMES, MetricReport, evaluate_rois
from .phantom import PhantomSpec, generate_phantom

__all__ = [
    "METHOD_ORDER", "STRATEGY_OF_METHOD", "BenchConfig", "BenchReport",
    "load_config", "default_config_dict", "auto_rois", "run_benchmark",
    "beam_current_sweep", "dictionary_study",
]

METHOD_ORDER = ("original_raster", "goal_denoise", "super_resolution",
                "nn_interpolation", "goal_inpaint", "ebi", "bpfa")

STRATEGY_OF_METHOD = {
    "original_raster": "raster",
    "goal_denoise": "raster",
    "super_resolution": "lowres",
    "nn_interpolation": "sparse",
    "goal_inpaint": "sparse",
    "ebi": "sparse",
    "bpfa": "sparse",
}

_STRATEGY_INDEX = {"raster": 0, "lowres": 1, "sparse": 2}


@dataclass(frozen=True)
class BudgetPreset:
    dwell_us: float
    fraction: float

    def scan_budget(self, current: float) -> ScanBudget:
        return ScanBudget(self.dwell_us, self.fraction, current)


@dataclass
class BenchConfig:
    ground_truth: PhantomSpec | str
    methods: tuple[str, ...] = METHOD_ORDER
    smoothing_sigma: float = 0.5
    budgets: dict = field(default_factory=lambda: {
        "raster": BudgetPreset(10.0, 1.0),
        "lowres": BudgetPreset(40.0, 0.25),
        "sparse": BudgetPreset(40.0, 0.25),
    })
    beam: BeamModel = field(default_factory=BeamModel)
    currents: tuple[float, ...] = (0.1,)
    rois: list[Rect] | None = None      # explicit ROIs, or None for auto
    auto_roi_count: int = 30
    auto_roi_size: int = 64
    master_seed: int = 0
    ebi_dictionary: str | None = None   # path; None = train on a sibling phantom
    goal_operator: str | None = None
    output_dir: str = "bench_out"
    bpfa_params: bpfa.BpfaParams = field(default_factory=bpfa.BpfaParams)
    goal_params: analysisop.GoalParams = field(
        default_factory=analysisop.GoalParams)
    ebi_params: ebi.EbiParams = field(default_factory=ebi.EbiParams)
    sr_params: superres.SrParams = field(default_factory=superres.SrParams)

    def validate(self) -> None:
        if not self.methods:
            raise ConfigError("at least one method is required")
        for m in self.methods:
            if m not in METHOD_ORDER:
                raise ConfigError(f"unknown method {m!r}")
        if not self.currents:
            raise ConfigError("at least one beam current is required")
        dwells = {name: average_dwell(p.scan_budget(0.1))
                  for name, p in self.budgets.items()}
        values = sorted(set(dwells.values()))
        if len(values) != 1:
            raise ConfigError(
                "budget mismatch: average dwell "
                + " ≠ ".join(f"{v:g} μs" for v in values))
        if self.rois is not None and not self.rois:
            raise ConfigError("explicit ROI list must not be empty")


def default_config_dict() -> dict:
    """The default benchmark configuration in its JSON form."""
    return {
        "ground_truth": {"phantom": {"width": 256, "height": 256,
                                     "droplets": 10, "curves": 5, "seed": 7}},
        "smoothing_sigma": 0.5,
        "methods": list(METHOD_ORDER),
        "budgets": {"raster": {"dwell_us": 10.0, "fraction": 1.0},
                    "lowres": {"dwell_us": 40.0, "fraction": 0.25},
                    "sparse": {"dwell_us": 40.0, "fraction": 0.25}},
        "beam": {"sigma_ref": 0.4, "current_ref": 0.1, "exponent": 0.5},
        "currents": [0.1],
        "rois": {"auto": 30, "size": 64},
        "master_seed": 20260810,
        "dictionaries": {"ebi": None, "goal_operator": None},
        "output_dir": "bench_out",
    }


def _phantom_from_dict(d: dict) -> PhantomSpec:
    return PhantomSpec(
        width=int(d.get("width", 256)), height=int(d.get("height", 256)),
        density=float(d.get("density", 1.0)),
        droplets=int(d.get("droplets", 10)), curves=int(d.get("curves", 5)),
        contrast_low=float(d.get("contrast_low", 0.15)),
        contrast_high=float(d.get("contrast_high", 0.9)),
        seed=int(d.get("seed", 0)))


def config_from_dict(raw: dict) -> BenchConfig:
    try:
        gt = raw["ground_truth"]
        if isinstance(gt, dict) and "phantom" in gt:
            ground_truth = _phantom_from_dict(gt["phantom"])
        elif isinstance(gt, dict) and "path" in gt:
            ground_truth = str(gt["path"])
        elif isinstance(gt, str):
            ground_truth = gt
        else:
            raise ConfigError("ground_truth must be a path or {'phantom': {...}}")
        budgets = {}
        for name in ("raster", "lowres", "sparse"):
            b = raw.get("budgets", {}).get(name)
            defaults = default_config_dict()["budgets"][name]
            b = b if b is not None else defaults
            budgets[name] = BudgetPreset(float(b["dwell_us"]),
                                         float(b["fraction"]))
        beam_raw = raw.get("beam", {})
        beam = BeamModel(sigma_ref=float(beam_raw.get("sigma_ref", 0.4)),
                         current_ref=float(beam_raw.get("current_ref", 0.1)),
                         exponent=float(beam_raw.get("exponent", 0.5)))
        rois_raw = raw.get("rois", {"auto": 30, "size": 64})
        rois = None
        auto_count, auto_size = 30, 64
        if isinstance(rois_raw, dict):
            auto_count = int(rois_raw.get("auto", 30))
            auto_size = int(rois_raw.get("size", 64))
        else:
            rois = [Rect(int(r["x"]), int(r["y"]), int(r["w"]), int(r["h"]))
                    for r in rois_raw]
        dicts = raw.get("dictionaries", {})
        cfg = BenchConfig(
            ground_truth=ground_truth,
            methods=tuple(raw.get("methods", METHOD_ORDER)),
            smoothing_sigma=float(raw.get("smoothing_sigma", 0.5)),
            budgets=budgets,
            beam=beam,
            currents=tuple(float(c) for c in raw.get("currents", [0.1])),
            rois=rois,
            auto_roi_count=auto_count,
            auto_roi_size=auto_size,
            master_seed=int(raw.get("master_seed", 0)),
            ebi_dictionary=dicts.get("ebi"),
            goal_operator=dicts.get("goal_operator"),
            output_dir=str(raw.get("output_dir", "bench_out")),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg.validate()
    return cfg


def load_config(path) -> BenchConfig:
    try:
        with open(path) as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# ROI selection

def auto_rois(image: Image, count: int, size: int) -> list[Rect]:
    """Top-variance ROI placement: the `count` highest-local-variance windows
    whose top-left corners keep a half-window Chebyshev separation."""
    h, w = image.shape
    if size > min(h, w):
        raise ConfigError(f"ROI size {size} exceeds image dimensions")
    x = image.data
    ii = np.zeros((h + 1, w + 1))
    ii2 = np.zeros((h + 1, w + 1))
    np.cumsum(np.cumsum(x, axis=0), axis=1, out=ii[1:, 1:])
    np.cumsum(np.cumsum(x * x, axis=0), axis=1, out=ii2[1:, 1:])

    def window_sums(acc):
        return (acc[size:, size:] - acc[:-size, size:]
                - acc[size:, :-size] + acc[:-size, :-size])

    npix = size * size
    s1 = window_sums(ii)
    s2 = window_sums(ii2)
    variance = s2 / npix - (s1 / npix) ** 2
    order = np.argsort(variance, axis=None, kind="stable")[::-1]
    min_sep = size // 2
    chosen: list[tuple[int, int]] = []
    for flat in order:
        y, xpos = divmod(int(flat), variance.shape[1])
        if all(max(abs(y - cy), abs(xpos - cx)) >= min_sep
               for cy, cx in chosen):
            chosen.append((y, xpos))
            if len(chosen) == count:
                break
    if len(chosen) < count:
        raise ConfigError(
            f"cannot place {count} ROIs of {size}x{size} in {w}x{h} "
            f"with separation {min_sep}")
    return [Rect(x=cx, y=cy, w=size, h=size) for cy, cx in chosen]


# ---------------------------------------------------------------------------
# Benchmark driver

@dataclass
class BenchEntry:
    current: float
    method: str
    report: MetricReport | None
    error: str | None = None
    reconstruction: Image | None = None


@dataclass
class BenchReport:
    entries: list[BenchEntry]
    rois: list[Rect]
    config_echo: dict
    ground_truth: Image

    def entry(self, current: float, method: str) -> BenchEntry:
        for e in self.entries:
            if e.current == current and e.method == method:
                return e
        raise KeyError((current, method))


def _seed(master: int, *tags: int) -> SeededRng:
    return SeededRng(np.random.SeedSequence([master, *tags]))


def _resolve_ground_truth(config: BenchConfig) -> Image:
    if isinstance(config.ground_truth, PhantomSpec):
        base = generate_phantom(config.ground_truth)
    else:
        base = load_image(config.ground_truth)
    return gaussian_smooth(base, config.smoothing_sigma)


def _training_image(config: BenchConfig, tag: int) -> Image:
    """Uncorrupted data 'comparable' to the ground truth: a sibling phantom
    with a derived seed (phantom mode only)."""
    if not isinstance(config.ground_truth, PhantomSpec):
        raise ConfigError(
            "ebi/goal methods need dictionary/operator paths when the ground "
            "truth is a file (no phantom family to train on)")
    spec = config.ground_truth
    sibling_seed = int(_seed(config.master_seed, 303, tag)
                       .generator.integers(0, 2 ** 31))
    sibling = PhantomSpec(width=spec.width, height=spec.height,
                          density=spec.density, droplets=spec.droplets,
                          curves=spec.curves, contrast_low=spec.contrast_low,
                          contrast_high=spec.contrast_high, seed=sibling_seed)
    return gaussian_smooth(generate_phantom(sibling), config.smoothing_sigma)


def _resolve_ebi_dictionary(config: BenchConfig) -> ebi.PatchDictionary:
    if config.ebi_dictionary is not None:
        if not Path(config.ebi_dictionary).exists():
            raise ConfigError(
                f"ebi dictionary not found: {config.ebi_dictionary}")
        return ebi.load_dictionary(config.ebi_dictionary)
    train = _training_image(config, 1)
    return ebi.build_dictionary([train], config.ebi_params.patch_size,
                                stride=4, max_atoms=4096,
                                rng=_seed(config.master_seed, 303, 11))


def _resolve_goal_operator(config: BenchConfig) -> analysisop.AnalysisOperator:
    if config.goal_operator is not None:
        if not Path(config.goal_operator).exists():
            raise ConfigError(
                f"goal operator not found: {config.goal_operator}")
        return analysisop.load_operator(config.goal_operator)
    train = _training_image(config, 2)
    p = config.goal_params
    ps = extract_patches(train, p.patch_size, p.stride)
    ps.patches = ps.patches - ps.patches.mean(axis=1, keepdims=True)
    k = 2 * p.patch_size ** 2
    return analysisop.learn_operator(ps, k, p, _seed(config.master_seed, 303, 12))


def _acquire(strategy: str, gt: Image, current: float, config: BenchConfig,
             current_idx: int):
    budget = config.budgets[strategy].scan_budget(current)
    rng = _seed(config.master_seed, 101, current_idx,
                _STRATEGY_INDEX[strategy])
    if strategy == "raster":
        return simulate_frame(gt, budget, config.beam, rng)
    if strategy == "lowres":
        frame = simulate_frame(gt, budget, config.beam, rng)
        return downscale_by_two(frame)
    frame = simulate_frame(gt, budget, config.beam, rng)
    return sparse_scan(frame, budget.sampled_fraction, rng)


def _reconstruct(method: str, acquisition, config: BenchConfig,
                 current_idx: int, resources: dict) -> Image:
    rng = _seed(config.master_seed, 202, current_idx,
                METHOD_ORDER.index(method))
    if method == "original_raster":
        return acquisition
    if method == "goal_denoise":
        return analysisop.operator_denoise(acquisition, resources["goal"],
                                           config.goal_params)
    if method == "super_resolution":
        return superres.btv_superresolve(acquisition, config.sr_params)
    if method == "nn_interpolation":
        return interpolation.interpolate(acquisition, "nn")
    if method == "goal_inpaint":
        return analysisop.operator_inpaint(acquisition, resources["goal"],
                                           config.goal_params)
    if method == "ebi":
        return ebi.ebi_inpaint(acquisition, resources["ebi"], config.ebi_params)
    if method == "bpfa":
        return bpfa.bpfa_inpaint(acquisition, config.bpfa_params, rng)
    raise ConfigError(f"unknown method {method!r}")


def _flag_winners(entries: list[BenchEntry]) -> None:
    """Per metric: flag the best mean and everything within one sigma of it
    (the best method's sigma)."""
    for metric in METRIC_NAMES:
        scored = [e for e in entries if e.report is not None]
        if not scored:
            continue
        best = max(scored, key=lambda e: e.report.means[metric])
        cutoff = best.report.means[metric] - best.report.sigmas[metric]
        for e in scored:
            e.report.winner[metric] = e.report.means[metric] >= cutoff


def run_benchmark(config: BenchConfig, keep_reconstructions: bool = False,
                  write_outputs: bool = True) -> BenchReport:
    """Simulate, reconstruct, and score every configured (current, method).

    Failures become explicit error entries rather than silent skips. Output
    files (CSV, JSON, montages) land in config.output_dir.
    """
    config.validate()
    gt = _resolve_ground_truth(config)
    if "super_resolution" in config.methods and (gt.width % 2 or gt.height % 2):
        raise ConfigError("super_resolution needs even ground-truth dimensions")
    rois = (config.rois if config.rois is not None
            else auto_rois(gt, config.auto_roi_count, config.auto_roi_size))
    for roi in rois:
        if roi.x + roi.w > gt.width or roi.y + roi.h > gt.height:
            raise ConfigError(f"ROI {roi} exceeds the ground truth bounds")

    resources = {}
    if "ebi" in config.methods:
        resources["ebi"] = _resolve_ebi_dictionary(config)
    if "goal_denoise" in config.methods or "goal_inpaint" in config.methods:
        resources["goal"] = _resolve_goal_operator(config)

    entries: list[BenchEntry] = []
    for ci, current in enumerate(config.currents):
        acquisitions = {}
        for method in config.methods:
            strategy = STRATEGY_OF_METHOD[method]
            if strategy not in acquisitions:
                acquisitions[strategy] = _acquire(strategy, gt, current,
                                                  config, ci)
            try:
                recon = _reconstruct(method, acquisitions[strategy], config,
                                     ci, resources)
                report = evaluate_rois(gt, recon, rois)
                entries.append(BenchEntry(current, method, report,
                                          reconstruction=recon if
                                          keep_reconstructions else None))
            except (NumericalError, ValueError, FloatingPointError) as exc:
                entries.append(BenchEntry(current, method, None,
                                          error=f"{type(exc).__name__}: {exc}"))
        _flag_winners([e for e in entries if e.current == current])

    report = BenchReport(entries=entries, rois=rois,
                         config_echo=_echo_config(config),
                         ground_truth=gt)
    if write_outputs:
        _write_outputs(report, config, keep_reconstructions)
    return report


def beam_current_sweep(config: BenchConfig, **kwargs) -> BenchReport:
    """run_benchmark over several currents, reported Table-2 style (method
    rows by current columns, PSNR-HVS-M primary; other metrics go in
    supplementary files)."""
    if len(config.currents) < 2:
        raise ConfigError("a beam-current sweep needs at least 2 currents")
    return run_benchmark(config, **kwargs)


def dictionary_study(config: BenchConfig, dictionaries: list[str],
                     write_outputs: bool = True):
    """EBI reconstruction quality as a function of the dictionary.

    Runs the EBI method once per dictionary (fixed acquisition seed), always
    prepending an 'ideal' dictionary built from the ground truth itself.
    Returns (rows, ideal_first) where rows = [(name, MetricReport), ...] and
    ideal_first says whether the ideal dictionary ranked first by PSNR.
    """
    config.validate()
    gt = _resolve_ground_truth(config)
    rois = (config.rois if config.rois is not None
            else auto_rois(gt, config.auto_roi_count, config.auto_roi_size))
    current = config.currents[0]
    acquisition = _acquire("sparse", gt, current, config, 0)

    named: list[tuple[str, ebi.PatchDictionary]] = []
    ideal = ebi.build_dictionary([gt], config.ebi_params.patch_size, stride=4,
                                 max_atoms=4096,
                                 rng=_seed(config.master_seed, 303, 21))
    named.append(("ideal", ideal))
    for path in dictionaries:
        if not Path(path).exists():
            raise ConfigError(f"dictionary not found: {path}")
        named.append((str(path), ebi.load_dictionary(path)))

    rows = []
    for name, dictionary in named:
        recon = ebi.ebi_inpaint(acquisition, dictionary, config.ebi_params)
        rows.append((name, evaluate_rois(gt, recon, rois)))
    psnrs = [r.means["psnr"] for _, r in rows]
    ideal_first = psnrs[0] == max(psnrs)
    if not ideal_first:
        warnings.warn("ideal dictionary did not rank first by PSNR",
                      RuntimeWarning)
    if write_outputs:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["dictionary,metric,mean,sigma"]
        for name, rep in rows:
            for metric in METRIC_NAMES:
                lines.append(f"{name},{metric},{rep.means[metric]:.6f},"
                             f"{rep.sigmas[metric]:.6f}")
        (out / "dictionary_study.csv").write_text("\n".join(lines) + "\n")
    return rows, ideal_first


# ---------------------------------------------------------------------------
# Report serialization

def _echo_config(config: BenchConfig) -> dict:
    gt = config.ground_truth
    return {
        "ground_truth": ({"phantom": gt.__dict__} if isinstance(gt, PhantomSpec)
                         else {"path": gt}),
        "smoothing_sigma": config.smoothing_sigma,
        "methods": list(config.methods),
        "budgets": {k: {"dwell_us": v.dwell_us, "fraction": v.fraction}
                    for k, v in config.budgets.items()},
        "beam": {"sigma_ref": config.beam.sigma_ref,
                 "current_ref": config.beam.current_ref,
                 "exponent": config.beam.exponent},
        "currents": list(config.currents),
        "rois": [{"x": r.x, "y": r.y, "w": r.w, "h": r.h}
                 for r in (config.rois or [])] or
                {"auto": config.auto_roi_count, "size": config.auto_roi_size},
        "master_seed": config.master_seed,
        "dictionaries": {"ebi": config.ebi_dictionary,
                         "goal_operator": config.goal_operator},
        "output_dir": config.output_dir,
    }


def _table1_csv(report: BenchReport, current: float) -> str:
    lines = ["method,metric,mean,sigma,winner"]
    for method in [m for m in METHOD_ORDER
                   if m in report.config_echo["methods"]]:
        e = report.entry(current, method)
        for metric in METRIC_NAMES:
            if e.report is None:
                lines.append(f"{method},{metric},,,error")
            else:
                flag = 1 if e.report.winner.get(metric, False) else 0
                lines.append(f"{method},{metric},{e.report.means[metric]:.6f},"
                             f"{e.report.sigmas[metric]:.6f},{flag}")
    return "\n".join(lines) + "\n"


def _table2_csv(report: BenchReport, metric: str) -> str:
    currents = report.config_echo["currents"]
    header = "method," + ",".join(f"{c:g}nA_mean,{c:g}nA_sigma"
                                  for c in currents)
    lines = [header]
    for method in [m for m in METHOD_ORDER
                   if m in report.config_echo["methods"]]:
        cells = [method]
        for current in currents:
            e = report.entry(current, method)
            if e.report is None:
                cells += ["", ""]
            else:
                cells += [f"{e.report.means[metric]:.6f}",
                          f"{e.report.sigmas[metric]:.6f}"]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def report_json(report: BenchReport) -> str:
    payload = {
        "config": report.config_echo,
        "rois": [{"x": r.x, "y": r.y, "w": r.w, "h": r.h}
                 for r in report.rois],
        "entries": [
            {
                "current": e.current,
                "method": e.method,
                "error": e.error,
                "metrics": None if e.report is None else {
                    "per_roi": {m: [float(v) for v in
                                    e.report.per_roi[:, i]]
                                for i, m in enumerate(e.report.metric_names)},
                    "mean": e.report.means,
                    "sigma": e.report.sigmas,
                    "winner": e.report.winner,
                },
            }
            for e in report.entries
        ],
    }
    return json.dumps(payload, indent=2)


def _montage(gt: Image, recons: list[Image], roi: Rect) -> Image:
    strips = [crop(gt, roi).data]
    for r in recons:
        strips.append(np.ones((roi.h, 2)))  # white separator
        strips.append(crop(r, roi).data)
    return Image(np.concatenate(strips, axis=1))


def _write_outputs(report: BenchReport, config: BenchConfig,
                   have_recons: bool) -> None:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for current in config.currents:
        (out / f"table1_{current:g}nA.csv").write_text(
            _table1_csv(report, current))
    (out / "table2_psnr_hvs_m.csv").write_text(
        _table2_csv(report, "psnr_hvs_m"))
    for metric in METRIC_NAMES:
        if metric == "psnr_hvs_m":
            continue
        (out / f"supplementary_{metric}.csv").write_text(
            _table2_csv(report, metric))
    (out / "report.json").write_text(report_json(report))
    save_image(report.ground_truth, out / "ground_truth.pgm")
    if have_recons:
        current = config.currents[0]
        recons = []
        for method in [m for m in METHOD_ORDER if m in config.methods]:
            e = report.entry(current, method)
            if e.reconstruction is not None:
                recons.append(e.reconstruction)
        if recons:
            for i, roi in enumerate(report.rois):
                save_image(_montage(report.ground_truth, recons, roi),
                           out / f"montage_roi{i:02d}.pgm")
