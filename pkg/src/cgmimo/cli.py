"""Command-line front end.

Subcommands
-----------
uplink     BLER sweep of one detector, CSV to ``--out`` or stdout
downlink   BLER sweep of one precoder
tradeoff   SNR at 10% BLER and multiplication count for K = 1..iters
count      closed-form real-multiplication counts

Exit codes: 0 success, 2 configuration error, 3 breakdown budget exceeded.
"""

import argparse
import sys

from .opcount import count_detect, count_precode, crossover, detect_stages, precode_stages
from .sim import (
    BreakdownBudgetExceeded,
    ConfigError,
    MethodSpec,
    SweepConfig,
    run_comparison,
    tradeoff_table,
    write_csv,
    write_tradeoff_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BREAKDOWN = 3

_METHOD_ALIASES = {"chol": "cholesky", "cholesky": "cholesky", "cg": "cg",
                   "cgls": "cgls", "neumann": "neumann"}

# flag / config-file key -> SweepConfig field
_KEYS = {
    "bs": "bs_antennas",
    "users": "users",
    "mod": "modulation",
    "method": "method",
    "iters": "iterations",
    "trials": "trials",
    "subcarriers": "subcarriers",
    "seed": "seed",
    "out": "out",
    "tracker": "tracker",
    "workers": "workers",
    "max_errors": "max_errors",
    "breakdown_budget": "breakdown_budget",
}
_INT_FIELDS = {"bs_antennas", "users", "iterations", "trials", "subcarriers", "seed",
               "workers", "max_errors"}
_FLOAT_FIELDS = {"breakdown_budget"}


def parse_snr(text):
    """``"a:b:step"`` (or a single value) to ``(start, stop, step)`` in dB."""
    parts = text.split(":")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"bad SNR range {text!r}; expected start:stop:step") from None
    if len(values) == 1:
        return values[0], values[0], 1.0
    if len(values) != 3:
        raise ConfigError(f"bad SNR range {text!r}; expected start:stop:step")
    return tuple(values)


def read_config_file(path):
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    with fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _convert(name, value):
    if name == "method":
        try:
            return _METHOD_ALIASES[value]
        except KeyError:
            raise ConfigError(f"unknown method {value!r}") from None
    try:
        if name in _INT_FIELDS:
            return int(value)
        if name in _FLOAT_FIELDS:
            return float(value)
    except ValueError:
        raise ConfigError(f"bad value {value!r} for {name}") from None
    return value


def build_config(args) -> SweepConfig:
    """Defaults, then the config file, then command-line flags."""
    raw = read_config_file(args.config) if args.config else {}
    unknown = set(raw) - set(_KEYS) - {"snr"}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in list(_KEYS) + ["snr"]:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    kw = {}
    if "snr" in raw:
        kw["snr_start"], kw["snr_stop"], kw["snr_step"] = parse_snr(str(raw.pop("snr")))
    for key, value in raw.items():
        name = _KEYS[key]
        kw[name] = _convert(name, value) if isinstance(value, str) else value
    return SweepConfig(**kw)


def _sweep_parser(sub, name, help_text):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--config", help="key=value file; flags override its entries")
    p.add_argument("--bs", type=int, help="base-station antennas B")
    p.add_argument("--users", type=int, help="single-antenna users U")
    p.add_argument("--mod", choices=["qpsk", "16qam", "64qam"])
    p.add_argument("--method", choices=sorted(_METHOD_ALIASES), type=str)
    p.add_argument("--iters", type=int, help="iterations K (CG, CGLS) or terms (Neumann)")
    p.add_argument("--tracker", choices=["approx", "exact"], help="CG SINR tracker")
    p.add_argument("--snr", help="SNR grid start:stop:step in dB")
    p.add_argument("--trials", type=int, help="OFDM symbols per SNR point")
    p.add_argument("--subcarriers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--max-errors", dest="max_errors", type=int,
                   help="stop an SNR point after this many block errors")
    p.add_argument("--out", help="CSV path (stdout if omitted)")
    return p


def make_parser():
    parser = argparse.ArgumentParser(prog="cgmimo", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _sweep_parser(sub, "uplink", "uplink detection BLER sweep")
    _sweep_parser(sub, "downlink", "downlink precoding BLER sweep")
    p = _sweep_parser(sub, "tradeoff", "SNR at 10%% BLER versus complexity over K = 1..iters")
    p.add_argument("--link", choices=["uplink", "downlink"], default="uplink")
    c = sub.add_parser("count", help="closed-form real-multiplication counts")
    c.add_argument("--bs", type=int, required=True)
    c.add_argument("--users", type=int, required=True)
    c.add_argument("--method", choices=sorted(_METHOD_ALIASES), default="cg")
    c.add_argument("--iters", type=int, default=1)
    c.add_argument("--tracker", choices=["approx", "exact"], default="approx")
    c.add_argument("--link", choices=["uplink", "downlink"], default="uplink")
    return parser


def _emit(text, path):
    if not path:
        sys.stdout.write(text)


def _run_count(args):
    method = _METHOD_ALIASES[args.method]
    try:
        if args.link == "uplink":
            stages = detect_stages(method, args.bs, args.users, args.iters, args.tracker)
            total = count_detect(method, args.bs, args.users, args.iters, args.tracker)
        else:
            stages = precode_stages(method, args.bs, args.users, args.iters)
            total = count_precode(method, args.bs, args.users, args.iters)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for stage, n in stages.items():
        print(f"{stage},{n}")
    print(f"total,{total}")
    if method in ("cg", "cgls"):
        k = crossover(args.bs, args.users, method, link=args.link)
        print(f"cheaper_than_cholesky_up_to_K,{k}")
    return EXIT_OK


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "count":
            return _run_count(args)
        cfg = build_config(args)
        if args.command == "tradeoff":
            specs = [MethodSpec("cholesky")]
            if cfg.method != "cholesky":
                specs += [MethodSpec(cfg.method, k, cfg.tracker)
                          for k in range(1, cfg.iterations + 1)]
            results = run_comparison(args.link, cfg, specs)
            text = write_tradeoff_csv(tradeoff_table(results, args.link), cfg, args.link, cfg.out)
        else:
            spec = cfg.method_spec
            result = run_comparison(args.command, cfg, [spec])[spec]
            text = write_csv(result, cfg.out)
    except ConfigError as exc:
        print(f"cgmimo: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BreakdownBudgetExceeded as exc:
        print(f"cgmimo: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    _emit(text, cfg.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
