"""Command-line orchestrator for the full attack pipeline.

Subcommands: ``train | template | search | exploit | random-baseline |
defense | sensitivity``.  Every command is a pure function of its config file
plus flags: identical seeds produce byte-identical outputs, so reports never
embed timestamps or absolute paths.

Exit codes: 0 success, 2 infeasible chain, 3 attack integrity failure
(precision violation / stale template / mapping mismatch), 4 configuration
error.
"""

import argparse
import json
import os
import statistics
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from . import dram as dram_mod
from . import massage, qnn, search
from .dram import (FLIPS_PER_SECOND, OWNER_ATTACKER, OWNER_VICTIM,
                   FlipProfile, new_dram, sample_profile, save_geometry,
                   template)
from .image import StaleModeError, TargetBit, WeightImage, read_chain, write_chain
from .massage import (MappingMismatch, PageFrameCache, PrecisionViolation,
                      ThresholdViolation, UnsatisfiablePlan, plan_aggressors,
                      plan_mapping, plan_to_json, precise_hammer,
                      release_and_remap, retemplate, verify_template)
from .qnn.model import class_fraction, loss_and_accuracy
from .search import (ProtectedMask, SearchConfig, protection_rounds,
                     search_chain, search_chain_targeted)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INTEGRITY = 3
EXIT_CONFIG = 4


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    seed: int = 7
    out: str = "out"
    # dataset
    dataset: str = "blobs"
    classes: int = 10
    blob_shape: tuple = (1, 8, 8)
    train_per_class: int = 205
    test_per_class: int = 51
    blob_noise: float = 1.75
    idx_train_images: str = ""
    idx_train_labels: str = ""
    idx_test_images: str = ""
    idx_test_labels: str = ""
    # model / training
    arch: str = "blob_mlp"
    hidden: tuple = (522, 256, 128)
    width_multiplier: int = 1
    bit_width: int = 8
    epochs: int = 2
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    train_batch: int = 128
    accuracy_floor: float = 0.85
    # dram
    geometry: str = "bench"
    channels: int = 0            # 0 -> take from the preset
    banks: int = 0
    rows: int = 0
    row_bytes: int = 0
    hammer_mode: str = ""
    density: str = "dense"
    density_count: int = 250_000  # explicit per-bank cells; 0 -> density preset
    attacker_budget: float = 0.2
    direction_split: float = dram_mod.ONE_TO_ZERO_SHARE
    recycling_threshold: int = massage.DEFAULT_RECYCLING_THRESHOLD
    noise_allocations: int = 0
    reboot_seed: int = -1        # >= 0 -> reboot before the exploit
    toggle_probability: float = 0.5
    verify_sample: int = 8
    # search
    p: int = 64
    target_accuracy: float = 0.11
    max_flips: int = 30
    eval_batch: int = 256
    chains: int = 1
    target_class: int = -1
    rate: float = 1.0

    # derived seeds (one master seed fans out to every component)
    @property
    def data_seed(self):
        return self.seed * 1000 + 1

    @property
    def train_seed(self):
        return self.seed * 1000 + 2

    @property
    def cell_seed(self):
        return self.seed * 1000 + 3

    @property
    def hammer_seed(self):
        return self.seed * 1000 + 4

    @property
    def batch_seed(self):
        return self.seed * 1000 + 5

    @property
    def sample_seed(self):
        return self.seed * 1000 + 6


_TUPLE_KEYS = {"hidden", "blob_shape"}


def parse_config_file(path):
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigError(f"bad config line: {line!r}")
            values[key.strip()] = val.strip()
    return values


def make_config(path=None, overrides=None):
    values = parse_config_file(path) if path else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = ExperimentConfig()
    valid = {f.name: f for f in fields(ExperimentConfig)}
    updates = {}
    for key, raw in values.items():
        if key not in valid:
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(cfg, key)
        if key in _TUPLE_KEYS:
            if isinstance(raw, str):
                raw = tuple(int(tok) for tok in raw.replace(",", " ").split())
            updates[key] = tuple(raw)
        elif isinstance(current, bool):
            updates[key] = str(raw).lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            updates[key] = int(raw)
        elif isinstance(current, float):
            updates[key] = float(raw)
        else:
            updates[key] = raw
    return replace(cfg, **updates)


# ---- building blocks -------------------------------------------------------------


def build_dataset(cfg):
    if cfg.dataset == "blobs":
        return qnn.gaussian_blobs(cfg.classes, cfg.blob_shape,
                                  cfg.train_per_class, cfg.test_per_class,
                                  cfg.blob_noise, cfg.data_seed)
    if cfg.dataset == "idx":
        for key in ("idx_train_images", "idx_train_labels", "idx_test_images",
                    "idx_test_labels"):
            path = getattr(cfg, key)
            if not path or not os.path.exists(path):
                raise ConfigError(f"{key} missing or not found: {path!r}")
        return qnn.load_idx_dataset(cfg.idx_train_images, cfg.idx_train_labels,
                                    cfg.idx_test_images, cfg.idx_test_labels)
    raise ConfigError(f"unknown dataset kind {cfg.dataset!r}")


def build_model_spec(cfg, width_multiplier=None, dataset=None):
    if dataset is not None:
        shape, classes = dataset.input_shape, dataset.class_count
    else:
        shape, classes = cfg.blob_shape, cfg.classes
    return qnn.build_spec(cfg.arch, shape, classes, cfg.bit_width,
                          cfg.hidden, width_multiplier or cfg.width_multiplier)


def dram_config(cfg):
    presets = {"bench": dram_mod.bench, "desk": dram_mod.desk,
               "full-single": dram_mod.full_single, "full-dual": dram_mod.full_dual}
    if cfg.geometry not in presets:
        raise ConfigError(f"unknown geometry preset {cfg.geometry!r}")
    base = presets[cfg.geometry]()
    kwargs = {}
    if cfg.channels:
        kwargs["channels"] = cfg.channels
    if cfg.banks:
        kwargs["banks_per_dimm"] = cfg.banks
    if cfg.rows:
        kwargs["rows_per_bank"] = cfg.rows
    if cfg.row_bytes:
        kwargs["row_bytes"] = cfg.row_bytes
    if cfg.hammer_mode:
        kwargs["hammer_mode"] = cfg.hammer_mode
    return replace(base, **kwargs) if kwargs else base


def provision(cfg, model):
    """Instantiate DRAM, mark the attacker's region, place the victim image.

    The attacker holds a contiguous low range of frames (the configured
    fraction of memory); the victim weight file initially sits at the top.
    """
    geometry = dram_config(cfg)
    density = cfg.density_count if cfg.density_count > 0 else cfg.density
    state = new_dram(geometry, density, cfg.cell_seed, cfg.hammer_seed,
                     one_to_zero=cfg.direction_split)
    image = WeightImage(model)
    total = geometry.total_pages
    attacker = int(total * cfg.attacker_budget)
    if attacker + image.page_count > total:
        raise ConfigError("attacker budget leaves no room for the victim image")
    state.set_owner(range(attacker), OWNER_ATTACKER)
    placement = {}
    for pgid in range(1, image.page_count + 1):
        pfn = total - image.page_count + (pgid - 1)
        state.set_owner([pfn], OWNER_VICTIM)
        state.write_page(pfn, image.page_bytes(pgid))
        placement[pgid] = pfn
    return state, image, placement, attacker


def search_config(cfg, protected=None):
    return SearchConfig(p=cfg.p, target_accuracy=cfg.target_accuracy,
                        max_flips=cfg.max_flips, eval_batch_size=cfg.eval_batch,
                        batch_seed=cfg.batch_seed, protected=protected)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _write_trace(path, trace):
    cols = ["iteration", "candidates", "layer", "index", "bit", "page", "bop",
            "mode", "loss", "accuracy", "metric"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in trace:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float)
                              else str(row[c]) for c in cols) + "\n")
    return path


def _chain_summary(chain):
    return {
        "flips": len(chain),
        "feasible": chain.feasible,
        "exhausted": chain.exhausted,
        "metric": chain.metric_name,
        "clean_metric": chain.clean_metric,
        "terminal_metric": chain.terminal_metric(),
        "per_step_metric": [s.metric for s in chain.steps],
        "one_to_zero_share": (sum(1 for s in chain.steps if s.mode == 0)
                              / len(chain) if len(chain) else None),
    }


# ---- commands ---------------------------------------------------------------------


def cmd_train(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    dataset = build_dataset(cfg)
    spec = build_model_spec(cfg, dataset=dataset)
    train_cfg = qnn.TrainConfig(epochs=cfg.epochs, lr=cfg.lr,
                                momentum=cfg.momentum,
                                weight_decay=cfg.weight_decay,
                                batch_size=cfg.train_batch,
                                accuracy_floor=cfg.accuracy_floor)
    model = qnn.train_small(spec, dataset, train_cfg, cfg.train_seed)
    path = os.path.join(cfg.out, "checkpoint.qnn")
    qnn.save_checkpoint(model, path)
    _, acc = loss_and_accuracy(model, dataset.x_test, dataset.y_test)
    image = WeightImage(model)
    info = {
        "clean_accuracy": acc,
        "weight_bytes": image.weight_bytes,
        "weight_pages": image.page_count,
        "header_pages": qnn.header_pages(model),
        "seed": cfg.seed,
    }
    _write_json(os.path.join(cfg.out, "train.json"), info)
    return path, info


def cmd_template(cfg, checkpoint=None):
    os.makedirs(cfg.out, exist_ok=True)
    model = qnn.load_checkpoint(checkpoint or os.path.join(cfg.out, "checkpoint.qnn"))
    state, _, _, attacker_pages = provision(cfg, model)
    profile = template(state)
    path = os.path.join(cfg.out, "profile.csv")
    profile.save_csv(path)
    save_geometry(state.config, os.path.join(cfg.out, "geometry.txt"),
                  seeds={"cell_seed": cfg.cell_seed,
                         "hammer_seed": cfg.hammer_seed})
    info = {
        "entries": len(profile),
        "attacker_pages": attacker_pages,
        "templating_seconds_estimate": len(profile) / FLIPS_PER_SECOND,
        "one_to_zero_share": (float((profile.direction == 0).mean())
                              if len(profile) else None),
    }
    _write_json(os.path.join(cfg.out, "template.json"), info)
    return path, info


def cmd_search(cfg, checkpoint=None, profile_path=None):
    os.makedirs(cfg.out, exist_ok=True)
    model = qnn.load_checkpoint(checkpoint or os.path.join(cfg.out, "checkpoint.qnn"))
    profile = FlipProfile.load_csv(profile_path
                                   or os.path.join(cfg.out, "profile.csv"))
    if cfg.rate < 1.0:
        profile = sample_profile(profile, cfg.rate, cfg.sample_seed)
    dataset = build_dataset(cfg)
    chains = []
    excluded = ProtectedMask()
    working = profile
    for i in range(cfg.chains):
        scfg = search_config(cfg, protected=excluded if len(excluded) else None)
        if cfg.target_class >= 0:
            chain = search_chain_targeted(model, dataset, working, scfg,
                                          cfg.target_class)
        else:
            chain = search_chain(model, dataset, working, scfg)
        chains.append(chain)
        write_chain(os.path.join(cfg.out, f"chain_{i + 1}.jsonl"), chain.records())
        _write_trace(os.path.join(cfg.out, f"trace_{i + 1}.csv"), chain.trace)
        # later chains must not reuse this chain's bits or locations
        excluded = ProtectedMask(set(excluded.refs) | {s.ref for s in chain.steps})
        used = {(s.pfn, s.bop) for s in chain.steps if s.pfn is not None}
        if used:
            keep = np.array([(int(p), int(b)) not in used
                             for p, b, _, _ in working.entries()])
            working = working.subset(keep)
    info = {"chains": [_chain_summary(c) for c in chains],
            "rate": cfg.rate,
            # published full-scale baseline for one candidate chain; kept out
            # of any assertion and reported for orientation only
            "full_scale_seconds_per_chain_reference": 120.0}
    _write_json(os.path.join(cfg.out, "search.json"), info)
    return chains, info


def _read_victim_block(state, image, placement, mapping):
    positions = dict(placement)
    positions.update(mapping)
    blob = b"".join(state.read_page(positions[pgid])
                    for pgid in range(1, image.page_count + 1))
    return blob[:image.weight_bytes]


def cmd_exploit(cfg, checkpoint=None, profile_path=None, chain_path=None):
    """Online phase: verify -> (retemplate) -> plan -> position -> hammer.

    The final accuracy is recomputed from the post-hammer weight image and
    must equal the chain's recorded terminal metric exactly.
    """
    os.makedirs(cfg.out, exist_ok=True)
    model = qnn.load_checkpoint(checkpoint or os.path.join(cfg.out, "checkpoint.qnn"))
    profile = FlipProfile.load_csv(profile_path
                                   or os.path.join(cfg.out, "profile.csv"))
    if cfg.rate < 1.0:
        profile = sample_profile(profile, cfg.rate, cfg.sample_seed)
    records = read_chain(chain_path or os.path.join(cfg.out, "chain_1.jsonl"))
    if not records:
        raise ConfigError("chain file is empty")
    targets = [TargetBit(r["page"], r["bop"], r["mode"]) for r in records]
    dataset = build_dataset(cfg)

    state, image, placement, attacker_pages = provision(cfg, model)
    rebooted = cfg.reboot_seed >= 0
    if rebooted:
        state.reboot(cfg.reboot_seed, cfg.toggle_probability)

    # the config floor keeps the spot check meaningful; 0 would be vacuous
    sample = max(massage.MIN_VERIFY_SAMPLE, cfg.verify_sample)
    status = verify_template(state, profile, sample)
    retemplate_stats = None
    working = profile
    if status == "obsolete":
        working, retemplate_stats = retemplate(state, profile,
                                               {t.bop for t in targets})

    plan = plan_mapping(targets, working, state)
    agg_sets, actions = plan_aggressors(plan, state)
    cache = PageFrameCache(cfg.recycling_threshold)
    mapping = release_and_remap(cache, plan, image, state,
                                noise=cfg.noise_allocations)
    hammer_report = precise_hammer(state, plan, actions, mapping)
    plan_to_json(plan, actions, os.path.join(cfg.out, "plan.json"))

    attacked = model.copy()
    attacked.load_weight_block(_read_victim_block(state, image, placement,
                                                  mapping))
    if cfg.target_class >= 0:
        final_metric = class_fraction(attacked, dataset.x_test, cfg.target_class)
        xb, yb = dataset.batch(cfg.eval_batch, cfg.batch_seed,
                               from_class=cfg.target_class)
    else:
        xb, yb = dataset.batch(cfg.eval_batch, cfg.batch_seed)
        _, final_metric = loss_and_accuracy(attacked, xb, yb)
    expected = records[-1]["expected_acc"]
    if final_metric != expected:
        raise PrecisionViolation(
            {("metric", final_metric)}, {("metric", expected)})
    _, clean_test_acc = loss_and_accuracy(model, dataset.x_test, dataset.y_test)
    _, final_test_acc = loss_and_accuracy(attacked, dataset.x_test,
                                          dataset.y_test)

    retained = len(mapping) + sum(
        len(state.addr.row_pfns(a.set, r))
        for a in actions for r in (a.victim_row - 1, a.victim_row + 1))
    report = {
        "chain": records,
        "per_step_metric": [r["expected_acc"] for r in records],
        # chain pages count weight-block pages; the same page in the
        # checkpoint file sits header_pages later
        "page_numbering": {"weight_block_page_offset": qnn.header_pages(model)},
        "flips_attempted": len(targets),
        "flips_achieved": len(hammer_report["flips"]),
        "final_metric": final_metric,
        "expected_metric": expected,
        "clean_test_accuracy": clean_test_acc,
        "final_test_accuracy": final_test_acc,
        "template_status": status,
        "rebooted": rebooted,
        "retemplate": retemplate_stats and {
            **retemplate_stats,
            "seconds_estimate":
                retemplate_stats["cells_retested"] / FLIPS_PER_SECOND,
        },
        "planning": {
            "memory_fraction_held": attacker_pages / state.config.total_pages,
            "pages_retained_after_mapping": retained,
            "candidate_locations": sorted(plan.candidate_counts.values()),
        },
        "hammer": {
            "actions": hammer_report["actions"],
            "seconds_estimate": hammer_report["hammer_seconds_estimate"],
        },
    }
    _write_json(os.path.join(cfg.out, "report.json"), report)
    return report


def cmd_random_flip_baseline(cfg, checkpoint=None, n_flips=100, trials=30):
    """Accuracy-drop distribution of uniform random distinct bit flips."""
    os.makedirs(cfg.out, exist_ok=True)
    model = qnn.load_checkpoint(checkpoint or os.path.join(cfg.out, "checkpoint.qnn"))
    dataset = build_dataset(cfg)
    image = WeightImage(model)
    _, clean = loss_and_accuracy(model, dataset.x_test, dataset.y_test)
    total_bits = image.weight_bytes * 8
    rng = np.random.default_rng(cfg.sample_seed)
    drops = []
    for _ in range(trials):
        work = model.copy()
        picks = rng.choice(total_bits, size=min(n_flips, total_bits),
                           replace=False)
        for gbi in sorted(int(g) for g in picks):
            page, bop = gbi // (4096 * 8) + 1, gbi % (4096 * 8)
            work.flip_bit(image.addr_to_bit(page, bop))
        _, acc = loss_and_accuracy(work, dataset.x_test, dataset.y_test)
        drops.append(clean - acc)
    path = os.path.join(cfg.out, "random_baseline.csv")
    with open(path, "w") as fh:
        fh.write("trial,accuracy_drop\n")
        for i, d in enumerate(drops):
            fh.write(f"{i},{d!r}\n")
    info = {"clean_accuracy": clean, "flips": n_flips, "trials": trials,
            "median_drop": statistics.median(drops) if drops else 0.0,
            "max_drop": max(drops) if drops else 0.0}
    _write_json(os.path.join(cfg.out, "random_baseline.json"), info)
    return drops, info


def cmd_defense(cfg, mode):
    os.makedirs(cfg.out, exist_ok=True)
    dataset = build_dataset(cfg)
    if mode == "width":
        seeds = [cfg.seed + i for i in range(5)]
        rows = []
        for s in seeds:
            sub = replace(cfg, seed=s)
            data = build_dataset(sub)
            lengths = {}
            for label, mult in (("base", 1), ("wide", 2)):
                spec = build_model_spec(sub, width_multiplier=mult, dataset=data)
                train_cfg = qnn.TrainConfig(epochs=sub.epochs, lr=sub.lr,
                                            momentum=sub.momentum,
                                            batch_size=sub.train_batch,
                                            accuracy_floor=sub.accuracy_floor)
                try:
                    model = qnn.train_small(spec, data, train_cfg,
                                            sub.train_seed)
                except qnn.TrainingFailure:
                    lengths[label] = None  # this init never cleared the floor
                    continue
                scfg = replace(search_config(sub), enforce_page_rule=False)
                chain = search_chain(model, data, None, scfg)
                lengths[label] = len(chain) if chain.feasible else sub.max_flips + 1
            rows.append({"seed": s, **lengths})
        usable = [r for r in rows if r["base"] is not None and r["wide"] is not None]
        base_med = statistics.median(r["base"] for r in usable) if usable else None
        wide_med = statistics.median(r["wide"] for r in usable) if usable else None
        info = {"mode": mode, "per_seed": rows,
                "median_base": base_med, "median_wide": wide_med,
                "wider_needs_at_least_as_many":
                    (wide_med >= base_med) if usable else None}
    elif mode == "topn":
        model = qnn.load_checkpoint(os.path.join(cfg.out, "checkpoint.qnn"))
        chains = protection_rounds(model, dataset, search_config(cfg), rounds=10)
        curve_path = os.path.join(cfg.out, "defense_topn_curves.csv")
        with open(curve_path, "w") as fh:
            fh.write("round,flip,metric\n")
            for i, chain in enumerate(chains, 1):
                for j, s in enumerate(chain.steps, 1):
                    fh.write(f"{i},{j},{s.metric!r}\n")
        info = {"mode": mode,
                "rounds": [{"round": i + 1, "flips": len(c),
                            "feasible": c.feasible,
                            "terminal_metric": c.terminal_metric()}
                           for i, c in enumerate(chains)],
                "all_rounds_succeed": all(c.feasible for c in chains)}
    elif mode == "layer-lock":
        model = qnn.load_checkpoint(os.path.join(cfg.out, "checkpoint.qnn"))
        weighted = model.weighted_indices()
        scfg = replace(search_config(cfg), enforce_page_rule=False)
        free_chain = search_chain(model, dataset, None, scfg)
        mask = ProtectedMask(locked_layers={weighted[0], weighted[-1]})
        locked_cfg = replace(scfg, protected=mask)
        locked_chain = search_chain(model, dataset, None, locked_cfg)
        info = {"mode": mode,
                "unlocked": _chain_summary(free_chain),
                "locked_first_last": _chain_summary(locked_chain)}
    else:
        raise ConfigError(f"unknown defense mode {mode!r}")
    _write_json(os.path.join(cfg.out, f"defense_{mode}.json"), info)
    return info


def cmd_sensitivity(cfg, checkpoint=None, profile_path=None):
    """Search + exploit across profile sampling rates (1.0 .. 0.001)."""
    os.makedirs(cfg.out, exist_ok=True)
    rates = [1.0, 0.1, 0.01, 0.001]
    results = []
    for i, rate in enumerate(rates):
        sub = replace(cfg, rate=rate,
                      out=os.path.join(cfg.out, f"rate_{i}"))
        os.makedirs(sub.out, exist_ok=True)
        chains, _ = cmd_search(sub, checkpoint or os.path.join(cfg.out, "checkpoint.qnn"),
                               profile_path or os.path.join(cfg.out, "profile.csv"))
        chain = chains[0]
        row = {"rate": rate, "flips": len(chain), "feasible": chain.feasible,
               "terminal_metric": chain.terminal_metric()}
        if chain.feasible and len(chain):
            report = cmd_exploit(sub,
                                 checkpoint or os.path.join(cfg.out, "checkpoint.qnn"),
                                 profile_path or os.path.join(cfg.out, "profile.csv"),
                                 os.path.join(sub.out, "chain_1.jsonl"))
            row["final_metric"] = report["final_metric"]
        results.append(row)
    info = {"rates": results}
    _write_json(os.path.join(cfg.out, "sensitivity.json"), info)
    return info


# ---- entry point -----------------------------------------------------------------


def _common_flags(sub):
    sub.add_argument("--config", default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="flipsim")
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "template", "search", "exploit", "random-baseline",
                 "defense", "sensitivity"):
        sub = subs.add_parser(name)
        _common_flags(sub)
        if name in ("search", "exploit", "random-baseline", "sensitivity"):
            sub.add_argument("--checkpoint", default=None)
        if name in ("search", "exploit", "sensitivity"):
            sub.add_argument("--profile", default=None)
            sub.add_argument("--rate", type=float, default=None)
        if name == "search":
            sub.add_argument("--chains", type=int, default=None)
            sub.add_argument("--target-class", type=int, default=None)
        if name == "exploit":
            sub.add_argument("--chain", default=None)
            sub.add_argument("--target-class", type=int, default=None)
        if name == "random-baseline":
            sub.add_argument("--flips", type=int, default=100)
            sub.add_argument("--trials", type=int, default=30)
        if name == "defense":
            sub.add_argument("--mode", choices=("width", "topn", "layer-lock"),
                             required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {"seed": getattr(args, "seed", None),
                 "out": getattr(args, "out", None),
                 "rate": getattr(args, "rate", None),
                 "chains": getattr(args, "chains", None),
                 "target_class": getattr(args, "target_class", None)}
    try:
        cfg = make_config(args.config, overrides)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "train":
            _, info = cmd_train(cfg)
            print(json.dumps(info, sort_keys=True))
        elif args.command == "template":
            _, info = cmd_template(cfg)
            print(json.dumps(info, sort_keys=True))
        elif args.command == "search":
            chains, info = cmd_search(cfg, args.checkpoint, args.profile)
            print(json.dumps(info["chains"], sort_keys=True))
            if not any(c.feasible for c in chains):
                return EXIT_INFEASIBLE
        elif args.command == "exploit":
            report = cmd_exploit(cfg, args.checkpoint, args.profile, args.chain)
            print(json.dumps({"final_metric": report["final_metric"],
                              "flips": report["flips_achieved"]},
                             sort_keys=True))
        elif args.command == "random-baseline":
            _, info = cmd_random_flip_baseline(cfg, args.checkpoint,
                                               args.flips, args.trials)
            print(json.dumps(info, sort_keys=True))
        elif args.command == "defense":
            info = cmd_defense(cfg, args.mode)
            print(json.dumps({"mode": args.mode}, sort_keys=True))
        elif args.command == "sensitivity":
            info = cmd_sensitivity(cfg, args.checkpoint, args.profile)
            print(json.dumps(info, sort_keys=True))
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PrecisionViolation, StaleModeError, MappingMismatch,
            ThresholdViolation, UnsatisfiablePlan) as exc:
        print(f"attack integrity failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except qnn.TrainingFailure as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
