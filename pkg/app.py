"""
DNB 模拟器实验入口

用法:
    python app.py <子命令> [--p 0.5] [--b 1] [--n 50 | --epsilon 0.02] [--seed 1] ...

结果写到 --out 指定的文件，未指定时写到标准输出；进度日志只写标准错误。
退出码：0 全部通过，2 有实验判定失败，1 用法或运行错误。
"""

import argparse
import logging
import sys
from typing import Callable, Dict, List

from config import Config, RunConfig, build_run_config, load_config_file
from core import estimators as est
from core.exceptions import DrainetError
from core.reference import ModelParams
from core.report import ExperimentReport, Verdict, exit_code, render_reports, write_reports

logger = logging.getLogger("drainet")

Runner = Callable[[RunConfig, ModelParams], List[ExperimentReport]]


# ---------------------------------------------------------
# 子命令
# ---------------------------------------------------------

def run_simulate_path(cfg: RunConfig, params: ModelParams) -> List[ExperimentReport]:
    return est.simulate_path_reports(params, cfg.steps)


def run_verify_duality(cfg: RunConfig, params: ModelParams) -> List[ExperimentReport]:
    return est.duality_experiment(params)


def run_verify_kernel(cfg: RunConfig, params: ModelParams) -> List[ExperimentReport]:
    return est.kernel_experiment(params, cfg.replicas, cfg.walk_steps, cfg.workers)


def run_estimate_drift(cfg: RunConfig, params: ModelParams) -> List[ExperimentReport]:
    return [est.estimate_drift(params, kind, cfg.walk_steps, cfg.replicas, cfg.workers) for kind in ("l", "r")]


def run_estimate_variance(cfg: RunConfig, params: ModelParams) -> List[ExperimentReport]:
    return [est.estimate_variance(params, cfg.walk_steps, cfg.replicas, workers=cfg.workers)]


def run_estimate_branchrate(cfg: RunConfig, params: ModelParams) -> List[ExperimentReport]:
    return [est.estimate_branch_rate(params, cfg.walk_steps, cfg.replicas, cfg.workers)]


def run_coal_tail(cfg: RunConfig, params: ModelParams) -> List[ExperimentReport]:
    reports = est.coalescence_tail_experiment(params, replicas=cfg.replicas, t_max=cfg.t_max, workers=cfg.workers)
    reports += est.dual_coalescence_tail_experiment(params, replicas=cfg.replicas, t_max=cfg.t_max,
                                                    workers=cfg.workers)
    return reports


def run_collapse(cfg: RunConfig, params: ModelParams) -> List[ExperimentReport]:
    alpha = cfg.alpha if cfg.alpha is not None else Config.COLLAPSE_ALPHA
    return est.collapse_experiment(params, T=cfg.t, n_list=(params.n, 2 * params.n),
                                   replicas=cfg.replicas, alpha=alpha, workers=cfg.workers)


def _limit_n(cfg: RunConfig, params: ModelParams) -> int:
    return params.n if cfg.scale_given else Config.LIMIT_N


def run_survival(cfg: RunConfig, params: ModelParams) -> List[ExperimentReport]:
    n = _limit_n(cfg, params)
    return [est.survival_vs_formula(params, cfg.delta, cfg.t, n, cfg.replicas, cfg.workers)]


def run_lr_compare(cfg: RunConfig, params: ModelParams) -> List[ExperimentReport]:
    offsets = (0.0, cfg.delta) if cfg.delta > 0 else (0.0,)
    n = _limit_n(cfg, params)
    return est.lr_pair_comparison(params, n, offsets, (cfg.t,), cfg.replicas, workers=cfg.workers)


def run_overshoot(cfg: RunConfig, params: ModelParams) -> List[ExperimentReport]:
    return est.overshoot_experiment(params, params.n, cfg.replicas, cfg.t_max, cfg.workers)


def run_dual_mean(cfg: RunConfig, params: ModelParams) -> List[ExperimentReport]:
    return est.dual_mean_experiment(params, cfg.replicas, cfg.walk_steps, cfg.workers)


def run_long_jumps(cfg: RunConfig, params: ModelParams) -> List[ExperimentReport]:
    return [est.long_jump_experiment(params, s=cfg.t, replicas=cfg.replicas, workers=cfg.workers)]


SUBCOMMANDS: Dict[str, Runner] = {
    "simulate-path": run_simulate_path,
    "verify-duality": run_verify_duality,
    "verify-kernel": run_verify_kernel,
    "estimate-drift": run_estimate_drift,
    "estimate-variance": run_estimate_variance,
    "estimate-branchrate": run_estimate_branchrate,
    "coal-tail": run_coal_tail,
    "collapse": run_collapse,
    "survival": run_survival,
    "lr-compare": run_lr_compare,
    "overshoot": run_overshoot,
    "dual-mean": run_dual_mean,
    "long-jumps": run_long_jumps,
}


def run_all(cfg: RunConfig, params: ModelParams) -> List[ExperimentReport]:
    reports = []
    for name, runner in SUBCOMMANDS.items():
        logger.info(f"▶️ [all] {name}")
        reports.extend(runner(cfg, params))
    return reports


# ---------------------------------------------------------
# 命令行
# ---------------------------------------------------------

class _ArgumentParser(argparse.ArgumentParser):
    """用法错误返回退出码 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: 错误: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    g = common.add_argument_group("模型参数")
    g.add_argument("--p", type=float, help=f"开放概率 (默认 {Config.P})")
    g.add_argument("--b", type=float, help=f"分叉强度 b (默认 {Config.B})")
    scale = g.add_mutually_exclusive_group()
    scale.add_argument("--n", type=int, help=f"扩散尺度 n，ε = b/n^α (默认 {Config.N}；survival 与 lr-compare 默认 {Config.LIMIT_N})")
    scale.add_argument("--epsilon", type=float, help="直接给定分叉概率 ε（与 --n 互斥）")
    g.add_argument("--alpha", type=float,
                   help=f"ε = b/n^α 的指数 (默认 {Config.ALPHA}；collapse 默认 {Config.COLLAPSE_ALPHA})")
    g.add_argument("--seed", type=int, help=f"环境种子 (默认 {Config.SEED})")

    r = common.add_argument_group("实验规模")
    r.add_argument("--replicas", type=int, help=f"副本数 (默认 {Config.REPLICAS})")
    r.add_argument("--t-max", dest="t_max", type=int, help=f"首达时间截尾 (默认 {Config.T_MAX})")
    r.add_argument("--steps", type=int, help=f"每个副本的步数 (默认 {Config.STEPS}；simulate-path 默认 n²)")
    r.add_argument("--delta", type=float, help=f"rescale 后的起点间距 δ (默认 {Config.DELTA})")
    r.add_argument("--t", type=float, help=f"rescale 后的时间 t (默认 {Config.T})")
    r.add_argument("--workers", type=int, help="并行进程数，受 DRAINET_THREADS 限制")

    o = common.add_argument_group("输出")
    o.add_argument("--config", help="扁平 key=value 配置文件，命令行参数优先")
    o.add_argument("--out", help="输出文件路径，缺省写到标准输出")
    o.add_argument("--format", choices=("csv", "json"), help=f"输出格式 (默认 {Config.FORMAT})")
    o.add_argument("--log-level", type=str.upper, choices=Config.LOG_LEVELS,
                   help="日志级别 (默认读取 DRAINET_LOG_LEVEL，再缺省为 INFO)")

    parser = _ArgumentParser(prog="app.py", description="DNB (带分叉的排水网络) 模拟与验证")
    sub = parser.add_subparsers(dest="command", metavar="<子命令>", required=True,
                                parser_class=_ArgumentParser)
    for name in [*SUBCOMMANDS, "all"]:
        sub.add_parser(name, parents=[common], help=f"运行 {name}")
    return parser


def setup_logging(level: str) -> None:
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


_FLAG_NAMES = ("p", "b", "n", "epsilon", "alpha", "seed", "replicas", "t_max", "steps",
               "delta", "t", "workers", "out", "format")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        setup_logging(args.log_level or Config.log_level())
    except ValueError as e:
        setup_logging("INFO")
        logger.error(f"❌ {e}")
        return 1

    try:
        file_values = load_config_file(args.config) if args.config else {}
        cfg = build_run_config(file_values, {k: getattr(args, k) for k in _FLAG_NAMES})
        params = cfg.model_params()
        logger.info(f"🚀 [{args.command}] p={params.p}, b={params.b}, n={params.n}, "
                    f"ε={params.eps:.4g}, seed={params.seed}, replicas={cfg.replicas}")
        runner = run_all if args.command == "all" else SUBCOMMANDS[args.command]
        reports = runner(cfg, params)
        if cfg.out:
            write_reports(reports, cfg.out, cfg.format)
            logger.info(f"💾 结果已写入 {cfg.out}")
        else:
            sys.stdout.write(render_reports(reports, cfg.format))
    except (DrainetError, ValueError) as e:
        logger.error(f"❌ {e}")
        return 1
    except OSError as e:
        logger.error(f"❌ 无法写出结果: {e}")
        return 1

    failed = [r.name for r in reports if r.verdict is Verdict.FAIL]
    if failed:
        logger.warning(f"⚠️ {len(failed)} 项判定失败: {sorted(set(failed))}")
    else:
        logger.info(f"✅ {len(reports)} 行结果，无失败判定")
    return exit_code(reports)


if __name__ == "__main__":
    sys.exit(main())
