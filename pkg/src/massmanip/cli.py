"""Command-line front end.

Verbs: gen-data, train {trajdiff|handdiff|connet|rationet}, sample, fit,
retime, eval, serve. Exit codes: 0 ok, 2 configuration error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ConfigError, NumericError


def _add_config_arg(p):
    p.add_argument("--config", default=None, help="RunConfig JSON (defaults used otherwise)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def cmd_gen_data(args):
    from .datagen import DataGenConfig, build_dataset
    cfg = DataGenConfig(out_dir=args.out, records_per_combo=args.records,
                        eval_records_per_combo=args.eval_records,
                        actions=tuple(int(a) for a in args.actions.split(",")),
                        n_frames=args.n_frames, seed=args.seed or 0,
                        refine_grasps=not args.no_refine)
    manifest = build_dataset(cfg)
    print(f"wrote {len(manifest['records'])} records to {args.out}")


def _load_records(cfg: RunConfig):
    from .datagen import load_dataset
    cfg.require_paths("dataset_dir")
    return load_dataset(cfg.dataset_dir)


def cmd_train(args):
    cfg = _load_config(args)
    Path(cfg.checkpoint_dir).mkdir(parents=True, exist_ok=True)
    name = args.model
    if name == "trajdiff":
        _train_trajdiff(cfg, args.steps)
    elif name == "handdiff":
        _train_handdiff(cfg, args.steps)
    elif name == "connet":
        _train_connet(cfg, args.steps)
    elif name == "rationet":
        _train_rationet(cfg, args.steps)
    print(f"saved checkpoint {cfg.checkpoint(name)}")


def _train_trajdiff(cfg, steps):
    from .datagen import load_dataset
    from .numerics import rng
    from .trajdiff import TrajDiffModel, template_vertices
    records = [r for r in _load_records(cfg) if r.split == "train"]
    p_temp = template_vertices(cfg.radius)
    states = np.stack([r.state_track(p_temp) for r in records])
    masses = np.array([r.mass for r in records])
    actions = np.array([r.action for r in records])
    model = TrajDiffModel(n_frames=cfg.n_frames, widths=cfg.traj_widths, T=cfg.traj_T,
                          radius=cfg.radius, lr=cfg.lr, seed=cfg.seed)
    g = rng.stream(cfg.seed, 0x7E1)
    steps = steps or cfg.traj_steps
    for step in range(steps):
        idx = g.choice(len(records), size=min(cfg.traj_batch, len(records)), replace=False)
        losses = model.train_step(states[idx], masses[idx], actions[idx], seed=cfg.seed)
        if step % 500 == 0:
            print(f"trajdiff step {step}: total {losses['total']:.4f}")
    model.save(cfg.checkpoint("trajdiff"))


def _train_handdiff(cfg, steps):
    from .numerics import rng
    from .handdiff import HandDiffModel
    records = [r for r in _load_records(cfg) if r.split == "train"]
    joints = np.stack([r.joints.joints for r in records])
    trajs = [r.traj for r in records]
    masses = np.array([r.mass for r in records])
    model = HandDiffModel(n_frames=cfg.n_frames, widths=cfg.hand_widths, T=cfg.hand_T,
                          lr=cfg.lr, seed=cfg.seed)
    g = rng.stream(cfg.seed, 0x7E2)
    steps = steps or cfg.hand_steps
    for step in range(steps):
        idx = g.choice(len(records), size=min(cfg.hand_batch, len(records)), replace=False)
        losses = model.train_step(joints[idx], [trajs[i] for i in idx], masses[idx], seed=cfg.seed)
        if step % 500 == 0:
            print(f"handdiff step {step}: total {losses['total']:.4f}")
    model.save(cfg.checkpoint("handdiff"))


def _train_connet(cfg, steps):
    from .numerics import rng
    from .connet import ConNetModel, connet_train_step
    records = [r for r in _load_records(cfg) if r.split == "train"]
    model = ConNetModel(n_vertices=2 * cfg.l_hand, hidden=cfg.connet_hidden,
                        lr=1e-3, seed=cfg.seed)
    g = rng.stream(cfg.seed, 0x7E3)
    steps = steps or cfg.connet_steps
    for step in range(steps):
        r = records[int(g.integers(len(records)))]
        loss = connet_train_step(model, r.joints.joints, r.traj.poses, r.mass, r.action,
                                 r.labels)
        if step % 500 == 0:
            print(f"connet step {step}: bce {loss:.4f}")
    model.save(cfg.checkpoint("connet"))


def _train_rationet(cfg, steps):
    from .datagen import generate_ratio_dataset, TRAIN_MASSES
    from .retime import RatioNetModel, train_rationet
    data = generate_ratio_dataset(240, TRAIN_MASSES + (0.5, 1.0), seed=cfg.seed)
    model = RatioNetModel(lr=3e-4, seed=cfg.seed)
    steps = steps or cfg.rationet_steps
    losses = train_rationet(model, data, int(steps * 0.7), batch=cfg.rationet_batch,
                            seed=cfg.seed)
    model.opt.lr = 1e-4
    losses += train_rationet(model, data, steps - int(steps * 0.7),
                             batch=cfg.rationet_batch, seed=cfg.seed + 1)
    print(f"rationet final loss {np.mean(losses[-20:]):.6f}")
    model.save(cfg.checkpoint("rationet"))


def cmd_sample(args):
    from .pipeline import ModelSnapshot, run_synthesis
    from .persist import persist_motion
    cfg = _load_config(args)
    cfg.require_paths("checkpoint_dir")
    snapshot = ModelSnapshot.load(cfg)
    bundle, summary = run_synthesis(snapshot, args.mass, args.action, seed=cfg.seed or 0)
    out = Path(args.out)
    persist_motion(out, bundle)
    print(json.dumps(summary["fit"]["terms"], indent=1))
    print(f"wrote {out}")


def cmd_fit(args):
    from .connet import ContactMap
    from .fitopt import FitConfig, fit_sequence
    from .handdiff import JointTrack, save_jnt
    from .handmodel import ObjectShape
    from .persist import MotionBundle, load_motion, persist_motion
    cfg = _load_config(args)
    bundle = load_motion(args.motion)
    if bundle.joints is None or bundle.traj is None:
        raise ConfigError("motion file must contain joints and a trajectory to fit")
    contacts = bundle.contacts or ContactMap(np.zeros((bundle.n_frames, 2 * cfg.l_hand),
                                                      dtype=np.float32))
    result = fit_sequence(bundle.joints, contacts, bundle.traj,
                          ObjectShape("sphere", cfg.radius),
                          FitConfig(max_iters=cfg.fit_iters, tolerance=cfg.fit_tolerance,
                                    l_hand=cfg.l_hand))
    out = Path(args.out)
    fitted = MotionBundle(traj=bundle.traj,
                          joints=JointTrack(result.surface.joints.reshape(bundle.n_frames, -1)),
                          contacts=contacts, hand_params=result.params,
                          meta={**(bundle.meta or {}), "energy": result.report["terms"]})
    persist_motion(out, fitted)
    save_jnt(out.with_suffix(".jnt"), fitted.joints)
    out.with_suffix(".report.json").write_text(json.dumps(result.report, indent=1))
    print(f"fit energy {result.report['energy']:.5f} ({result.report['status']}); wrote {out}")


def cmd_retime(args):
    from .pipeline import ModelSnapshot, run_retime
    from .trajdiff import save_traj
    cfg = _load_config(args)
    cfg.require_paths("checkpoint_dir")
    snapshot = ModelSnapshot.load(cfg)
    points = json.loads(Path(args.points).read_text())
    bundle, summary = run_retime(snapshot, points, args.mass, seed=cfg.seed or 0)
    save_traj(args.out, bundle.traj)
    print(f"d_user {summary['d_user']:.4f} m, ratio sum {summary['ratio_sum']:.4f}; wrote {args.out}")


def cmd_eval(args):
    from .handmodel import ObjectShape, skin_hand_surface
    from .metrics import EvalReport, diversity_multimodality, physical_plausibility
    from .persist import load_motion
    cfg = _load_config(args)
    paths = sorted(Path(args.motions).glob("*.motion"))
    if not paths:
        raise ConfigError(f"no .motion files under {args.motions}")
    samples = []
    by_action = {}
    for p in paths:
        b = load_motion(p)
        if b.hand_params is None or b.traj is None:
            continue
        surf = skin_hand_surface(b.hand_params, obj_centers=b.traj.poses[:, :3].astype(np.float64),
                                 l_hand=cfg.l_hand)
        action = (b.meta or {}).get("action")
        samples.append({"vertices": surf.vertices, "traj": b.traj,
                        "shape": ObjectShape("sphere", cfg.radius), "action": action})
        by_action.setdefault(action, []).append(b.joints.joints if b.joints is not None
                                                else b.traj.poses)
    plaus = physical_plausibility(samples)
    div = None
    if sum(len(v) >= 2 for v in by_action.values()):
        div = diversity_multimodality(by_action)
    report = EvalReport(m_col=plaus["m_col"], m_dist=plaus["m_dist"], m_touch=plaus["m_touch"],
                        diversity=None if div is None else div["diversity"],
                        multimodality=None if div is None else div["multimodality"],
                        sample_counts={"motions": len(samples)})
    out = Path(args.out)
    out.write_text(report.to_json())
    print(report.to_json())
    print(report.csv_row(args.condition))
    print(f"wrote {out}")


def cmd_serve(args):
    from .pipeline import ModelSnapshot
    from .service import serve
    cfg = _load_config(args)
    cfg.require_paths("checkpoint_dir")
    serve(ModelSnapshot.load(cfg))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="massmanip",
                                description="mass-conditioned two-hand manipulation synthesis")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate the synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--records", type=int, default=2, help="train records per (action, mass)")
    g.add_argument("--eval-records", type=int, default=1)
    g.add_argument("--actions", default="0,1,2,3,4")
    g.add_argument("--n-frames", type=int, default=180)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--no-refine", action="store_true", help="skip grasp energy refinement")
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train one model")
    t.add_argument("model", choices=["trajdiff", "handdiff", "connet", "rationet"])
    t.add_argument("--steps", type=int, default=None)
    _add_config_arg(t)
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sample", help="run the full synthesis pipeline")
    s.add_argument("--mass", type=float, required=True)
    s.add_argument("--action", type=int, default=None)
    s.add_argument("--out", required=True)
    _add_config_arg(s)
    s.set_defaults(fn=cmd_sample)

    f = sub.add_parser("fit", help="fit hand parameters to a motion file")
    f.add_argument("--motion", required=True)
    f.add_argument("--out", required=True)
    _add_config_arg(f)
    f.set_defaults(fn=cmd_fit)

    r = sub.add_parser("retime", help="retime a user path JSON [[x,y,z], ...]")
    r.add_argument("--points", required=True)
    r.add_argument("--mass", type=float, required=True)
    r.add_argument("--out", required=True)
    _add_config_arg(r)
    r.set_defaults(fn=cmd_retime)

    e = sub.add_parser("eval", help="evaluate a directory of motion files")
    e.add_argument("--motions", required=True)
    e.add_argument("--out", default="eval_report.json")
    e.add_argument("--condition", default="default")
    _add_config_arg(e)
    e.set_defaults(fn=cmd_eval)

    v = sub.add_parser("serve", help="start the HTTP service")
    _add_config_arg(v)
    v.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
