"""Command-line interface.

Exit codes: 0 success, 1 configuration / usage error, 2 runtime error.
"""

import argparse
import csv
import json
import logging
import math
import sys
import time

from .channel import ChannelSpec, equalize, transmit
from .codec import ExpansionPlan, SpiralParams, decode_network, encode_network
from .data import load_csv
from .experiments import (
    RESULT_COLUMNS,
    ConfigError,
    SchemaError,
    emit_plot_data,
    load_config,
    run_sweep,
)
from .formats import FormatError, load_model, save_model, save_stream
from .nn import init_network
from .pipeline import (
    InterpolationPair,
    PruneSchedule,
    desk_config,
    desk_task,
    evaluate_over_channel,
    interpolate,
    prune_finetune,
    train_interpolation,
    train_noise_injection,
    train_variable_snr,
)
from .rng import make_rng
from .sensitivity import (
    allocate_expansion,
    channel_noise_std,
    hessian_top_eigenvalue,
    loss_sensitivity,
)

log = logging.getLogger("airlink")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _snr(text):
    if text.lower() in ("inf", "+inf", "infinity", "none"):
        return math.inf
    return float(text)


def _load_data(args, default_split):
    if args.data:
        return load_csv(args.data)
    train, test = desk_task(args.seed)
    split = args.split or default_split
    return {"train": train, "test": test}[split]


def _load_plan(path, n_layers):
    if not path:
        return None
    with open(path) as fh:
        raw = json.load(fh)
    plan = ExpansionPlan(tuple(raw["factors"]), raw.get("mode", "repeat"))
    if len(plan.factors) != n_layers:
        raise UsageError(f"plan has {len(plan.factors)} factors, model has {n_layers} layers")
    return plan


def _write_training_log(history, path):
    if not path:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "loss", "clean_acc", "noisy_acc"],
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(history)


def _need_out(args):
    if not args.out:
        raise UsageError("--out is required for this command")
    return args.out


def _train_cfg(args, teacher=None):
    return desk_config(
        epochs=args.epochs,
        seed=args.seed,
        batch_size=args.batch_size,
        snr_train_db=args.snr if args.snr is not None else 0.0,
        noise_injection=args.snr is not None and args.snr != math.inf,
        teacher=teacher,
        temperature=args.temperature,
    )


def cmd_train(args):
    data = _load_data(args, "train")
    if args.init:
        net = load_model(args.init)
    else:
        sizes = [int(s) for s in args.arch.split(",")]
        sizes[0] = data.n_features
        net = init_network(sizes, args.seed)
    teacher = load_model(args.teacher) if args.teacher else None
    history = []
    if args.variable_snr:
        lo, hi = args.variable_snr
        cfg = _train_cfg(args, teacher)
        cfg.noise_injection = True
        net = train_variable_snr(net, data, lo, hi, cfg, history)
    else:
        net = train_noise_injection(net, data, _train_cfg(args, teacher), history)
    save_model(net, _need_out(args))
    _write_training_log(history, args.log)
    print(f"saved {args.out}: {net.arch_id}, {net.param_count} parameters, "
          f"train loss {history[-1]['loss']:.4f}" if history else f"saved {args.out}")


def cmd_prune(args):
    data = _load_data(args, "train")
    net = load_model(args.model)
    teacher = load_model(args.teacher) if args.teacher else None
    sched = PruneSchedule(args.target, args.fraction, args.mode)
    history = []
    net = prune_finetune(net, data, _train_cfg(args, teacher), sched, history)
    save_model(net, _need_out(args))
    _write_training_log(history, args.log)
    print(f"saved {args.out}: {net.arch_id}, {net.param_count} parameters")


def cmd_sensitivity(args):
    data = _load_data(args, "train")
    net = load_model(args.model)
    std = channel_noise_std(net, args.snr)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["layer_index", "d_i", "energy", "s1", "lambda", "normalized_s"])
        for i, layer in enumerate(net.layers):
            s1 = loss_sensitivity(net, data, std, i, args.trials, args.seed)
            eig = hessian_top_eigenvalue(net, data, i, seed=args.seed)
            if not eig.converged:
                log.warning("power iteration for layer %d did not converge", i)
            lam = max(0.0, eig.value)
            energy = layer.energy()
            chosen = lam if args.metric == "hessian" else s1
            writer.writerow([i, layer.size, repr(energy), repr(s1), repr(lam),
                             repr(chosen / energy)])
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_allocate(args):
    data = _load_data(args, "train")
    net = load_model(args.model)
    if args.metric == "hessian":
        sens = [max(0.0, hessian_top_eigenvalue(net, data, i, seed=args.seed).value)
                for i in range(len(net.layers))]
    else:
        std = channel_noise_std(net, args.snr)
        sens = [loss_sensitivity(net, data, std, i, args.trials, args.seed)
                for i in range(len(net.layers))]
    energies = [layer.energy() for layer in net.layers]
    plan = allocate_expansion(net.layer_sizes, sens, energies, args.budget, args.mode)
    payload = {"mode": plan.mode, "factors": list(plan.factors),
               "bandwidth_real_dims": plan.bandwidth(net.layer_sizes), "budget": args.budget}
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _spec(args):
    return ChannelSpec(args.channel, args.snr, args.sigma_h, args.seed, args.block_len)


def cmd_transmit(args):
    net = load_model(args.model)
    plan = _load_plan(args.plan, len(net.layers))
    stream = encode_network(net, plan, SpiralParams(gamma=args.gamma))
    if args.stream_out:
        save_stream(stream, args.stream_out)
    received, fades = transmit(stream, _spec(args), make_rng(args.seed, 0x7E))
    eq = equalize(received, fades)
    decoded = decode_network(eq.dims, stream)
    save_model(decoded, _need_out(args))
    mse = float(((decoded.flat() - net.flat()) ** 2).mean())
    print(f"{len(stream)} real dims ({(len(stream) + 1) // 2} complex symbols), "
          f"gain {stream.gain:.6g}, parameter MSE {mse:.6g}"
          + (f", erased blocks {eq.erased_blocks}" if eq.erased_blocks else ""))


def cmd_evaluate(args):
    data = _load_data(args, "test")
    if args.pair:
        lo, hi = args.pair_snr
        net = interpolate(InterpolationPair(load_model(args.pair[0]), load_model(args.pair[1]),
                                            lo, hi), args.snr)
        scheme = "airnet+interp"
    else:
        if not args.model:
            raise UsageError("evaluate needs --model or --pair")
        net = load_model(args.model)
        scheme = "airnet"
    plan = _load_plan(args.plan, len(net.layers))
    start = time.perf_counter()
    mean, std = evaluate_over_channel(net, data, _spec(args), plan, SpiralParams(gamma=args.gamma),
                                      args.trials, args.seed)
    bandwidth = plan.bandwidth(net.layer_sizes) if plan else net.param_count
    row = [scheme if plan is None else f"{scheme}+{plan.mode}", repr(args.snr), bandwidth,
           args.seed, args.trials, repr(mean), repr(std),
           int(round(1000 * (time.perf_counter() - start)))]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        writer.writerow(row)
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_interp_train(args):
    data = _load_data(args, "train")
    net = load_model(args.model)
    teacher = load_model(args.teacher) if args.teacher else None
    lo, hi = args.snr_range
    cfg = _train_cfg(args, teacher)
    cfg.noise_injection = True
    pair = train_interpolation(net, data, lo, hi, cfg)
    prefix = _need_out(args)
    save_model(pair.w_min, prefix + "_min.airn")
    save_model(pair.w_max, prefix + "_max.airn")
    print(f"saved {prefix}_min.airn ({lo} dB) and {prefix}_max.airn ({hi} dB)")


def cmd_sweep(args):
    if not args.config:
        raise UsageError("sweep needs --config")
    cfg = load_config(args.config)
    if args.seed is not None and args.seed_given:
        cfg.raw["seeds"] = [args.seed]
    out = args.out or "results.csv"
    result = run_sweep(cfg, out, workers=args.workers)
    print(f"{out}: {len(result.rows)} rows ({result.computed} computed, {result.cached} cached)")
    for cell, error in result.failed:
        print(f"failed cell {cell}: {error}", file=sys.stderr)
    return 2 if result.failed else 0


def cmd_plot_data(args):
    files = emit_plot_data(args.csv, args.group_by, args.out or "plot-data")
    for path in files:
        print(path)


def build_parser():
    # global flags are accepted before or after the subcommand; the subcommand
    # copies use SUPPRESS so they never overwrite a value given up front
    top = _Parser(add_help=False)
    top.add_argument("--seed", type=int, default=0)
    top.add_argument("--config")
    top.add_argument("--out")
    top.add_argument("-v", "--verbose", action="store_true", default=False)
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    data = _Parser(add_help=False)
    data.add_argument("--data", help="headerless CSV (features..., label); default: desk blobs")
    data.add_argument("--split", choices=["train", "test"], help="blob split to use")

    training = _Parser(add_help=False)
    training.add_argument("--snr", type=_snr, default=None, help="training SNR in dB (omit: none)")
    training.add_argument("--epochs", type=int, default=600)
    training.add_argument("--batch-size", type=int, default=32)
    training.add_argument("--teacher", help="AIRN teacher model for distillation")
    training.add_argument("--temperature", type=float, default=2.0)
    training.add_argument("--log", help="write the training log CSV here")

    channel = _Parser(add_help=False)
    channel.add_argument("--snr", type=_snr, default=10.0)
    channel.add_argument("--channel", choices=["awgn", "rayleigh_block"], default="awgn")
    channel.add_argument("--sigma-h", type=float, default=1.0)
    channel.add_argument("--block-len", type=int, default=0)
    channel.add_argument("--plan", help="JSON plan from `allocate`")
    channel.add_argument("--gamma", type=float, default=2 * math.pi)

    parser = _Parser(prog="airlink", description="Analog over-the-air delivery of neural networks.",
                     parents=[top])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", parents=[common, data, training], help="train a network")
    p.add_argument("--arch", default="2,32,32,3")
    p.add_argument("--init", help="start from this AIRN model instead of a fresh init")
    p.add_argument("--variable-snr", type=float, nargs=2, metavar=("MIN", "MAX"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("prune", parents=[common, data, training], help="prune + fine-tune")
    p.add_argument("--model", required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--mode", choices=["joint", "separate"], default="joint")
    p.set_defaults(func=cmd_prune, epochs=60)

    p = sub.add_parser("sensitivity", parents=[common, data], help="per-layer sensitivity CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--snr", type=_snr, default=5.0, help="SNR setting the perturbation size")
    p.add_argument("--trials", type=int, default=8)
    p.add_argument("--metric", choices=["hessian", "loss_based"], default="hessian")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("allocate", parents=[common, data], help="unequal expansion plan")
    p.add_argument("--model", required=True)
    p.add_argument("--budget", type=int, required=True, help="bandwidth in real dims")
    p.add_argument("--mode", choices=["repeat", "sk"], default="repeat")
    p.add_argument("--metric", choices=["hessian", "loss_based"], default="hessian")
    p.add_argument("--snr", type=_snr, default=5.0)
    p.add_argument("--trials", type=int, default=8)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("transmit", parents=[common, channel], help="send a model once")
    p.add_argument("--model", required=True)
    p.add_argument("--stream-out", help="also dump the AIRS symbol stream")
    p.set_defaults(func=cmd_transmit)

    p = sub.add_parser("evaluate", parents=[common, data, channel], help="accuracy over a channel")
    p.add_argument("--model")
    p.add_argument("--pair", nargs=2, metavar=("MIN_MODEL", "MAX_MODEL"))
    p.add_argument("--pair-snr", type=float, nargs=2, metavar=("SNR_MIN", "SNR_MAX"),
                   default=(-3.0, 10.0))
    p.add_argument("--trials", type=int, default=50)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common], help="run a configured sweep")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("interp-train", parents=[common, data, training],
                       help="train interpolation boundary networks")
    p.add_argument("--model", required=True, help="initial weights for both boundaries")
    p.add_argument("--snr-range", type=float, nargs=2, metavar=("MIN", "MAX"), required=True)
    p.set_defaults(func=cmd_interp_train)

    p = sub.add_parser("plot-data", parents=[common], help="per-curve files from a sweep CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--group-by", choices=["snr", "bandwidth"], default="snr")
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.seed_given = "--seed" in argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except (UsageError, ConfigError, SchemaError, FormatError, FileNotFoundError) as exc:
        print(f"airlink: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"airlink: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
