"""Command-line interface: simulate, tune-pid, train, evaluate, ablate, plot-script.

Every command resolves its configuration with the precedence
CLI flag > config file > built-in default, then records the fully resolved
values in a run manifest (run_manifest.json) next to the data outputs. A
manifest can itself be passed back via --config to rerun the command with
bit-identical data outputs (the manifest timestamp is excluded from the
hashed payload).

Config file schema (JSON, all sections optional):

    {
      "env":    { ...spillsim.EnvConfig fields... },
      "train":  { ...ppo.TrainConfig fields... },
      "reward": { "kind": "neg_ema" | "neg_sum", "alpha": 0.5 },
      "variant": "main",
      "master_seed": 0,
      "gains":  { "format_version": 1, "kp": ..., "ki": ..., "kd": ..., "dt": ... }
    }

Exit codes: 0 success, 2 config error, 3 numeric divergence, 4 I/O.
The SPILLREG_THREADS env var caps worker threads for per-seed evaluation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone

from . import __version__, metrics, ppo
from .controllers import PidGains, pid_episode_records, run_pid_episode, tune_pid
from .errors import (
    CheckpointError,
    ConfigError,
    DivergenceError,
    InputError,
    SpillRegError,
    UsageError,
)
from .spillsim import EnvConfig, run_raw_episode, write_trace_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4

MANIFEST_NAME = "run_manifest.json"


@dataclass(frozen=True)
class VariantSpec:
    """One row of the ablation grid: policy head, state features, reward."""

    name: str
    policy: str  # "pid" | "nn"
    state: str  # "pid_act" | "pid3" | "cd_over"
    reward_kind: str
    alpha: float
    policy_label: str
    reward_label: str
    state_label: str
    algo_label: str = "PPO"


VARIANTS: dict[str, VariantSpec] = {
    v.name: v
    for v in (
        VariantSpec("main", "pid", "pid_act", "neg_ema", 0.5, "PID", "EMA a=0.5", "P,I,D,Act"),
        VariantSpec("ema01", "pid", "pid_act", "neg_ema", 0.1, "PID", "EMA a=0.1", "P,I,D,Act"),
        VariantSpec("ema09", "pid", "pid_act", "neg_ema", 0.9, "PID", "EMA a=0.9", "P,I,D,Act"),
        VariantSpec("sum", "pid", "pid_act", "neg_sum", 0.5, "PID", "-SUM", "P,I,D,Act"),
        VariantSpec("nn", "nn", "pid_act", "neg_ema", 0.5, "NN", "EMA a=0.5", "P,I,D,Act"),
        VariantSpec("pid3", "pid", "pid3", "neg_ema", 0.5, "PID", "EMA a=0.5", "P,I,D"),
        VariantSpec("cd_over", "pid", "cd_over", "neg_ema", 0.5, "PID", "EMA a=0.5", "CD,Over-1,P,Act"),
    )
}

# fixed report order, main configuration last
ABLATION_ROWS = ("ema01", "nn", "ema09", "sum", "pid3", "cd_over", "main")

CONFIG_SECTIONS = {"env", "train", "reward", "variant", "master_seed", "gains"}


def thread_budget() -> int:
    raw = os.environ.get("SPILLREG_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"SPILLREG_THREADS must be an integer, got {raw!r}")


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path}: top level must be a JSON object")
    if "command" in data and "config" in data:
        # a run manifest was passed; rerun from its recorded resolved config
        data = data["config"]
    unknown = set(data) - CONFIG_SECTIONS
    if unknown:
        raise ConfigError(f"config file {path}: unknown section(s) {sorted(unknown)}")
    return data


@dataclass
class ResolvedRun:
    env_cfg: EnvConfig
    train_cfg: ppo.TrainConfig
    reward_cfg: ppo.RewardConfig
    variant: VariantSpec
    master_seed: int
    gains: PidGains | None

    def config_payload(self) -> dict:
        payload = {
            "env": self.env_cfg.to_dict(),
            "train": self.train_cfg.to_dict(),
            "reward": self.reward_cfg.to_dict(),
            "variant": self.variant.name,
            "master_seed": self.master_seed,
        }
        if self.gains is not None:
            payload["gains"] = self.gains.to_dict()
        return payload


def resolve_run(args) -> ResolvedRun:
    file_cfg = load_config_file(args.config) if getattr(args, "config", None) else {}
    variant_name = getattr(args, "variant", None) or file_cfg.get("variant") or "main"
    if variant_name not in VARIANTS:
        raise ConfigError(f"unknown variant {variant_name!r}; choose from {sorted(VARIANTS)}")
    variant = VARIANTS[variant_name]

    env_cfg = EnvConfig.from_dict(file_cfg.get("env", {}))

    if "reward" in file_cfg:
        reward_cfg = ppo.RewardConfig.from_dict(file_cfg["reward"])
    else:
        reward_cfg = ppo.RewardConfig(kind=variant.reward_kind, alpha=variant.alpha)

    train_over = dict(file_cfg.get("train", {}))
    iterations = getattr(args, "iterations", None)
    if iterations is not None:
        train_over["iterations"] = iterations
    train_over.setdefault("alpha", reward_cfg.alpha)
    train_cfg = ppo.TrainConfig.from_dict(train_over)

    if getattr(args, "seed", None) is not None:
        master_seed = args.seed
    else:
        master_seed = int(file_cfg.get("master_seed", 0))

    gains = None
    gains_path = getattr(args, "gains", None)
    if gains_path:
        gains = PidGains.from_dict(load_json(gains_path))
    elif "gains" in file_cfg:
        gains = PidGains.from_dict(file_cfg["gains"])
    return ResolvedRun(env_cfg, train_cfg, reward_cfg, variant, master_seed, gains)


def load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_manifest(out_dir: str, command: str, config_payload: dict, master_seed: int,
                   outputs: dict, extra: dict | None = None) -> str:
    payload = {"command": command, "master_seed": master_seed, "config": config_payload}
    manifest = dict(payload)
    manifest["tool_version"] = __version__
    manifest["created_utc"] = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    manifest["outputs"] = outputs
    manifest["payload_sha256"] = hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, MANIFEST_NAME)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_json_output(out_dir: str, name: str, data: dict) -> str:
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def ensure_out_dir(args) -> str:
    out = getattr(args, "out", None) or "."
    os.makedirs(out, exist_ok=True)
    return out


def parse_seed_list(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise ConfigError(f"--seeds expects comma-separated integers, got {text!r}")
    if not seeds:
        raise ConfigError("--seeds must name at least one seed")
    return seeds


# --- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    run = resolve_run(args)
    out_dir = ensure_out_dir(args)
    seed = run.master_seed
    if run.gains is not None:
        raw, corrected, actions = pid_episode_records(run.env_cfg, seed, run.gains)
    else:
        raw = run_raw_episode(run.env_cfg, seed)
        corrected = list(raw)
        actions = [0.0] * len(raw)
    trace_path = os.path.join(out_dir, "trace.csv")
    write_trace_csv(trace_path, raw, corrected, actions)
    sdf_raw = metrics.sdf(raw).sdf
    sdf_corr = metrics.sdf(corrected).sdf
    write_manifest(
        out_dir, "simulate", run.config_payload(), seed,
        outputs={"trace_csv": "trace.csv"},
        extra={"sdf_raw": sdf_raw, "sdf_corrected": sdf_corr},
    )
    print(f"wrote {trace_path}")
    print(f"sdf_raw={sdf_raw:.6f} sdf_corrected={sdf_corr:.6f} (seed {seed})")
    return EXIT_OK


def cmd_tune_pid(args) -> int:
    run = resolve_run(args)
    out_dir = ensure_out_dir(args)
    seeds = parse_seed_list(args.seeds) if args.seeds else run.train_cfg.seeds
    gains = tune_pid(run.env_cfg, list(seeds))
    scores = [metrics.sdf(run_pid_episode(run.env_cfg, s, gains)).sdf for s in seeds]
    mean_sdf = sum(scores) / len(scores)
    payload = run.config_payload()
    payload["gains"] = gains.to_dict()
    gains_out = dict(gains.to_dict(), manifest=MANIFEST_NAME, mean_sdf=mean_sdf, seeds=list(seeds))
    write_json_output(out_dir, "gains.json", gains_out)
    write_manifest(out_dir, "tune-pid", payload, run.master_seed,
                   outputs={"gains_json": "gains.json"})
    print(f"tuned gains: kp={gains.kp} ki={gains.ki} kd={gains.kd} (dt={gains.dt})")
    print(f"mean PID SDF over seeds {list(seeds)}: {mean_sdf:.6f}")
    return EXIT_OK


def cmd_train(args) -> int:
    run = resolve_run(args)
    out_dir = ensure_out_dir(args)
    threads = thread_budget()
    if run.gains is None:
        run.gains = tune_pid(run.env_cfg, list(run.train_cfg.seeds))
    try:
        result = ppo.train(
            run.train_cfg,
            run.env_cfg,
            reward_cfg=run.reward_cfg,
            policy_variant=run.variant.policy,
            state_variant=run.variant.state,
            master_seed=run.master_seed,
            gains=run.gains,
            threads=threads,
        )
    except DivergenceError as exc:
        last_good = exc.diagnostics.get("last_good")
        if last_good is not None:
            last_good = dict(last_good, manifest=MANIFEST_NAME)
            ppo.save_checkpoint(os.path.join(out_dir, "checkpoint.json"), last_good)
            write_manifest(out_dir, "train", run.config_payload(), run.master_seed,
                           outputs={"checkpoint": "checkpoint.json"},
                           extra={"status": "diverged", "diverged_at": exc.diagnostics.get("iteration")})
            print(f"divergence at iteration {exc.diagnostics.get('iteration')}; "
                  f"last good checkpoint retained in {out_dir}", file=sys.stderr)
        raise

    curve_path = os.path.join(out_dir, "curve.csv")
    with open(curve_path, "w", encoding="utf-8") as fh:
        fh.write(ppo.format_curve_csv(result.curve_rows))
    checkpoint = dict(result.checkpoint, manifest=MANIFEST_NAME)
    ppo.save_checkpoint(os.path.join(out_dir, "checkpoint.json"), checkpoint)
    report = dict(result.report.to_dict(), manifest=MANIFEST_NAME)
    write_json_output(out_dir, "report.json", report)

    payload = run.config_payload()  # gains resolved above, so reruns skip tuning
    write_manifest(out_dir, "train", payload, run.master_seed,
                   outputs={"curve_csv": "curve.csv", "checkpoint": "checkpoint.json",
                            "report_json": "report.json"})
    agg = report["aggregate"]
    print(f"trained variant {run.variant.name!r} for {run.train_cfg.iterations} iterations")
    print(
        "mean SDF: rl={rl:.4f} pid={pid:.4f} noise={noise:.4f} "
        "(vs_pid {vp:+.2f}% vs_noise {vn:+.2f}%)".format(
            rl=agg["mean_sdf_rl"], pid=agg["mean_sdf_pid"], noise=agg["mean_sdf_noise"],
            vp=agg["vs_pid_pct"], vn=agg["vs_noise_pct"],
        )
    )
    print(f"outputs in {out_dir}: curve.csv checkpoint.json report.json {MANIFEST_NAME}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    out_dir = ensure_out_dir(args)
    data = ppo.load_checkpoint(args.checkpoint)
    actor, _critic, env_cfg, gains, train_cfg, _reward_cfg = ppo.restore_from_checkpoint(data)
    seeds = parse_seed_list(args.seeds) if args.seeds else train_cfg.seeds
    report = ppo.build_report(env_cfg, gains, actor, seeds, threads=thread_budget())
    report_out = dict(report.to_dict(), manifest=MANIFEST_NAME, checkpoint=os.fspath(args.checkpoint))
    write_json_output(out_dir, "report.json", report_out)
    payload = {
        "env": env_cfg.to_dict(),
        "train": train_cfg.to_dict(),
        "gains": gains.to_dict(),
        "seeds": list(seeds),
        "checkpoint": os.fspath(args.checkpoint),
    }
    write_manifest(out_dir, "evaluate", payload, data.get("master_seed", 0),
                   outputs={"report_json": "report.json"})
    for row in report_out["per_seed"]:
        print(
            "seed {seed}: noise={sdf_noise:.4f} pid={sdf_pid:.4f} rl={sdf_rl:.4f} "
            "(vs_pid {vs_pid_pct:+.2f}% vs_noise {vs_noise_pct:+.2f}%)".format(**row)
        )
    agg = report_out["aggregate"]
    print(
        "mean: noise={mean_sdf_noise:.4f} pid={mean_sdf_pid:.4f} rl={mean_sdf_rl:.4f} "
        "vs_pid {vs_pid_pct:+.2f}% vs_noise {vs_noise_pct:+.2f}%".format(**agg)
    )
    return EXIT_OK


def _csv_field(text: str) -> str:
    # state labels such as "P,I,D,Act" carry commas and need quoting
    if "," in text or '"' in text:
        return '"' + text.replace('"', '""') + '"'
    return text


def format_ablation_csv(rows: list[dict]) -> str:
    """Rows + aggregate footer. Comment header documents scope and semantics."""
    lines = [
        "# ablation grid over reward/policy/state variants; one training run per row",
        "# vs_pid / vs_noise: mean per-seed relative SDF improvement of RL, percent",
        "# rows cover the on-policy (PPO) grid only; a SAC comparison row is intentionally out of scope",
        "vs_pid,vs_noise,policy,reward,algo,state",
    ]
    ok = [r for r in rows if r["error"] is None]
    for r in rows:
        labels = ",".join(_csv_field(r[k]) for k in ("policy", "reward", "algo", "state"))
        if r["error"] is None:
            lines.append(f"{r['vs_pid']!r},{r['vs_noise']!r},{labels}")
        else:
            lines.append(f"nan,nan,{labels}")
    if ok:
        mean_vp = sum(r["vs_pid"] for r in ok) / len(ok)
        mean_vn = sum(r["vs_noise"] for r in ok) / len(ok)
        lines.append(f"{mean_vp!r},{mean_vn!r},MEAN({len(ok)} rows),,,")
    return "\n".join(lines) + "\n"


def cmd_ablate(args) -> int:
    run = resolve_run(args)
    out_dir = ensure_out_dir(args)
    threads = thread_budget()
    row_names = list(ABLATION_ROWS)
    if args.rows:
        row_names = [name.strip() for name in args.rows.split(",") if name.strip()]
        unknown = [name for name in row_names if name not in VARIANTS]
        if unknown:
            raise ConfigError(f"unknown ablation row(s) {unknown}; choose from {sorted(VARIANTS)}")
    if run.gains is None:
        # one shared PID baseline for every row keeps the comparison honest
        run.gains = tune_pid(run.env_cfg, list(run.train_cfg.seeds))

    rows = []
    row_errors = {}
    for name in row_names:
        spec = VARIANTS[name]
        row = {
            "name": name,
            "policy": spec.policy_label,
            "reward": spec.reward_label,
            "algo": spec.algo_label,
            "state": spec.state_label,
            "vs_pid": None,
            "vs_noise": None,
            "error": None,
        }
        try:
            result = ppo.train(
                run.train_cfg,
                run.env_cfg,
                reward_cfg=ppo.RewardConfig(kind=spec.reward_kind, alpha=spec.alpha),
                policy_variant=spec.policy,
                state_variant=spec.state,
                master_seed=run.master_seed,
                gains=run.gains,
                threads=threads,
            )
        except (SpillRegError, FloatingPointError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
            row_errors[name] = row["error"]
            print(f"row {name!r} failed: {row['error']}", file=sys.stderr)
        else:
            agg = result.report.to_dict()["aggregate"]
            row["vs_pid"] = agg["vs_pid_pct"]
            row["vs_noise"] = agg["vs_noise_pct"]
            print(
                f"row {name}: vs_pid {row['vs_pid']:+.2f}% vs_noise {row['vs_noise']:+.2f}%"
            )
        rows.append(row)

    csv_path = os.path.join(out_dir, "ablation.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(format_ablation_csv(rows))
    payload = run.config_payload()
    payload["rows"] = row_names
    write_manifest(
        out_dir, "ablate", payload, run.master_seed,
        outputs={"ablation_csv": "ablation.csv"},
        extra={
            "seed_schedule": list(run.train_cfg.seeds),
            "shared_seed_schedule": True,
            "row_errors": row_errors,
        },
    )
    print(f"wrote {csv_path}")
    return EXIT_OK


PLOT_SCRIPT = """\
# gnuplot script: renders the data outputs of this tool
# usage: gnuplot -e "outdir='runs/main'" plot.gp
if (!exists("outdir")) outdir = "."

set datafile separator ","
set terminal pngcairo size 1000,600
set grid

set output outdir . "/curve.png"
set title "Training progress"
set xlabel "iteration"
set ylabel "SDF"
plot outdir . "/curve.csv" using 1:4 with lines title "RL", \\
     outdir . "/curve.csv" using 1:5 with lines title "PID", \\
     outdir . "/curve.csv" using 1:6 with lines title "unregulated"

set output outdir . "/trace.png"
set title "Spill trace"
set xlabel "step"
set ylabel "intensity"
plot outdir . "/trace.csv" using 1:2 with lines title "raw", \\
     outdir . "/trace.csv" using 1:3 with lines title "corrected"
"""


def cmd_plot_script(args) -> int:
    out_dir = ensure_out_dir(args)
    path = os.path.join(out_dir, "plot.gp")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(PLOT_SCRIPT)
    print(f"wrote {path}")
    return EXIT_OK


# --- parser / entry ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spillreg",
        description="Spill-regulation testbed: surrogate simulator, PID baseline, PPO training.",
    )
    parser.add_argument("--version", action="version", version=f"spillreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, variant=True, iterations=False, gains=False, seeds=False, rows=False):
        p.add_argument("--config", help="JSON config file (or a run manifest to rerun)")
        p.add_argument("--seed", type=int, help="master seed (default 0)")
        p.add_argument("--out", help="output directory (default .)")
        if variant:
            p.add_argument("--variant", choices=sorted(VARIANTS), help="variant name (default main)")
        if iterations:
            p.add_argument("--iterations", type=int, help="override training iterations")
        if gains:
            p.add_argument("--gains", help="JSON file with tuned PID gains")
        if seeds:
            p.add_argument("--seeds", help="comma-separated evaluation seeds")
        if rows:
            p.add_argument("--rows", help="comma-separated subset of ablation rows")

    p = sub.add_parser("simulate", help="emit one episode trace CSV (raw, or PID-corrected with --gains)")
    common(p, gains=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tune-pid", help="grid-tune PID gains on the surrogate")
    common(p, seeds=True)
    p.set_defaults(func=cmd_tune_pid)

    p = sub.add_parser("train", help="run PPO training, write curve/checkpoint/report")
    common(p, iterations=True, gains=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint with mean-action rollouts")
    p.add_argument("--checkpoint", required=True, help="checkpoint JSON from train")
    p.add_argument("--seeds", help="comma-separated evaluation seeds (default: training seeds)")
    p.add_argument("--out", help="output directory (default .)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the variant grid and emit the comparison table")
    common(p, iterations=True, gains=True, rows=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("plot-script", help="emit a gnuplot script for the CSV outputs")
    p.add_argument("--out", help="output directory (default .)")
    p.set_defaults(func=cmd_plot_script)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, InputError, UsageError, CheckpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
