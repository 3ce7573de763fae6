"""
Command-line interface: signal generation, filter-bank checks, descriptors,
reconstruction, decay sweeps and phase-filter tables.

Exit codes: 0 on success, 2 on invalid input, 1 on runtime failure.
"""
import sys
import argparse
import logging
from typing import Any, Dict, List, Optional

import numpy as np
import scipy.fft as sfft

from .env_setup import setup_environment
from .descriptors import count_breakdown, describe, mean_flatness, select_coefficients
from .filterbank import bank_from_params, build_bank, frame_check, load_bank, save_bank
from .json_utils import (dumps, load_descriptors, recovery_report, save_descriptors, sweep_csv,
                         write_json)
from .phase_harmonics import FILTER_KINDS, hhat_table, lipschitz_constants
from .recovery import RecoveryConfig, decay_sweep, ergodicity_report, reconstruct
from .settings import DEFAULTS, load_settings
from .signal_io import (RngSpec, gen_cartoon, gen_modulated_cosine, gen_piecewise_regular,
                        gen_white_noise, load_signal, save_signal)
from .transform import analytic_pair_check, analyze, dump_coefficients, frame_energy, signal_energy

logger = logging.getLogger('phaseharmonics')

SIGNAL_KINDS = ('white', 'piecewise', 'modcos', 'cartoon')


def _emit(data: Any) -> None:
    print(dumps(data))


def resolve_settings(args: argparse.Namespace) -> Dict[str, Any]:
    """Defaults < environment < --config file < explicit flags"""
    settings = load_settings(getattr(args, 'config', None))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _bank_for(settings: Dict[str, Any], signal: Optional[np.ndarray] = None):
    d, n = settings['d'], settings['n']
    if signal is not None:
        if signal.ndim == 2 and signal.shape[0] != signal.shape[1]:
            raise ValueError(f"2D signals must be square, got {signal.shape}")
        d, n = signal.ndim, signal.shape[0]
    return build_bank(d, n, settings['j'], settings['q'], settings['l'])


def _recovery_config(settings: Dict[str, Any]) -> RecoveryConfig:
    return RecoveryConfig.from_settings(settings)


def cmd_gen_signal(args, settings) -> int:
    n = settings['n']
    rng = RngSpec(settings['seed'], settings['stream'])
    if args.kind == 'white':
        x = gen_white_noise((n,) * settings['d'], rng)
    elif args.kind == 'piecewise':
        x = gen_piecewise_regular(n, args.singularities or max(1, n // 64), rng)
    elif args.kind == 'modcos':
        x = gen_modulated_cosine(n, 2 * np.pi * args.nu_bin / n, 2 * np.pi * args.lam_bin / n)
    else:
        x = gen_cartoon(n, rng)
    save_signal(x, args.out)
    _emit({'out': args.out, 'kind': args.kind, 'shape': list(x.shape)})
    return 0


def cmd_filterbank_check(args, settings) -> int:
    bank = _bank_for(settings)
    report = frame_check(bank, args.max_freq)
    if bank.ndim == 1:
        report['analytic_deviation'] = analytic_pair_check(bank)
    _emit(report)
    return 0


def cmd_export_bank(args, settings) -> int:
    bank = _bank_for(settings)
    save_bank(bank, args.out)
    _emit({'out': args.out, 'channels': bank.num_channels, 'params': bank.params.to_dict()})
    return 0


def cmd_analyze(args, settings) -> int:
    x = load_signal(args.input)
    wx = analyze(x, _bank_for(settings, x))
    summary = {'channels': len(wx), 'labels': [list(label) for label in wx.labels],
               'signal_energy': signal_energy(x), 'frame_energy': frame_energy(wx)}
    if args.dump_dir:
        summary['files'] = dump_coefficients(wx, args.dump_dir)
    _emit(summary)
    return 0


def cmd_describe(args, settings) -> int:
    x = load_signal(args.input)
    bank = _bank_for(settings, x)
    selection = select_coefficients(bank, settings['delta'], settings['beta'], settings['k2_max'],
                                    settings['include_lowpass'], settings['cross_angles'])
    desc = describe(x, bank, selection)
    save_descriptors(desc, args.out)
    _emit({'out': args.out, 'M': desc.M, **count_breakdown(selection), 'mean_flatness': mean_flatness(desc)})
    return 0


def cmd_reconstruct(args, settings) -> int:
    desc = load_descriptors(args.desc)
    bank = load_bank(args.bank) if args.bank else bank_from_params(desc.bank_params)
    reference = load_signal(args.ref) if args.ref else None
    result = reconstruct(desc, bank, _recovery_config(settings), reference=reference)
    save_signal(result.signal, args.out)

    report = recovery_report(result, ergodicity_report(result))
    if args.report:
        write_json(report, args.report)
    _emit({k: report[k] for k in ('M', 'psnr', 'shift', 'losses', 'iterations', 'timing')})
    return 0


def cmd_sweep(args, settings) -> int:
    deltas = [int(v) for v in args.delta_list.split(',') if v.strip()]
    if not deltas:
        raise ValueError("--delta needs at least one value")
    rng = RngSpec(settings['seed'], settings['stream'])

    if args.input:
        x = load_signal(args.input)
    elif args.full or args.kind == 'cartoon':
        x = gen_cartoon(256 if args.full else 64, rng)
    elif args.kind == 'modcos':
        n = settings['n']
        x = gen_modulated_cosine(n, 2 * np.pi * 4 / n, 2 * np.pi * (n // 4) / n)
    else:
        x = gen_piecewise_regular(settings['n'], max(1, settings['n'] // 64), rng)

    sweep = decay_sweep(x, _bank_for(settings, x), deltas, _recovery_config(settings), settings['beta'],
                        settings['k2_max'], settings['include_lowpass'], settings['cross_angles'])
    text = sweep_csv(sweep)
    if args.out:
        with open(args.out, 'w', encoding='utf-8') as f:
            f.write(text)
        logger.info(f"Wrote sweep to {args.out}")
    sys.stdout.write(text)
    return 0


def cmd_hhat(args, settings) -> int:
    h = hhat_table(args.kind, settings['kmax'])
    _emit({**h.to_dict(), 'constants': lipschitz_constants(h)})
    return 0


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', type=str, default=None, help='key=value settings file')


def _bank_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--d', type=int, choices=(1, 2), default=None, help='Signal dimension')
    parser.add_argument('--n', type=int, default=None, help='Grid size per axis (power of two)')
    parser.add_argument('--j', type=int, default=None, help='Number of octaves (default log2 n)')
    parser.add_argument('--q', type=int, default=None, help='Wavelets per octave (1D)')
    parser.add_argument('--l', type=int, default=None, help='Number of angles (2D)')


def _selection_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--beta', type=float, default=None, help='Frequency proximity constant')
    parser.add_argument('--k2-max', dest='k2_max', type=int, default=None, help="Largest harmonic k'")
    parser.add_argument('--no-lowpass', dest='include_lowpass', action='store_const', const=False, default=None)
    parser.add_argument('--cross-angles', dest='cross_angles', action='store_const', const=True, default=None)


def _recovery_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--restarts', type=int, default=None)
    parser.add_argument('--seed', type=int, default=None)
    parser.add_argument('--stream', type=int, default=None)
    parser.add_argument('--max-iters', dest='max_iters', type=int, default=None)
    parser.add_argument('--memory', type=int, default=None, help='L-BFGS memory')
    parser.add_argument('--init-scale', dest='init_scale', type=float, default=None)
    parser.add_argument('--workers', dest='restart_workers', type=int, default=None, help='Parallel restarts')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='phaseharmonics', description='Wavelet phase-harmonic analysis and recovery')
    parser.add_argument('--fft-workers', dest='fft_workers', type=int, default=None)
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-signal', help='Generate a test signal')
    _common(p)
    p.add_argument('--kind', choices=SIGNAL_KINDS, required=True)
    p.add_argument('--d', type=int, choices=(1, 2), default=None)
    p.add_argument('--n', type=int, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--stream', type=int, default=None)
    p.add_argument('--singularities', type=int, default=None, help='Breakpoints of the piecewise signal')
    p.add_argument('--nu-bin', dest='nu_bin', type=int, default=4, help='Low frequency in units of 2pi/n')
    p.add_argument('--lam-bin', dest='lam_bin', type=int, default=256, help='High frequency in units of 2pi/n')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_gen_signal)

    p = sub.add_parser('filterbank-check', help='Frame bounds of a bump filter bank')
    _common(p)
    _bank_args(p)
    p.add_argument('--max-freq', dest='max_freq', type=float, default=None,
                   help='Band limit for eta_band in radians (default xi/2)')
    p.set_defaults(func=cmd_filterbank_check)

    p = sub.add_parser('export-bank', help='Write a filter bank to disk')
    _common(p)
    _bank_args(p)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_export_bank)

    p = sub.add_parser('analyze', help='Wavelet transform of a signal')
    _common(p)
    _bank_args(p)
    p.add_argument('--input', required=True)
    p.add_argument('--dump-dir', dest='dump_dir', default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser('describe', help='Compute phase-harmonic descriptors')
    _common(p)
    _bank_args(p)
    _selection_args(p)
    p.add_argument('--input', required=True)
    p.add_argument('--delta', type=int, default=None, help='Maximum octave separation')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser('reconstruct', help='Recover a signal from descriptors')
    _common(p)
    _recovery_args(p)
    p.add_argument('--desc', required=True)
    p.add_argument('--bank', default=None)
    p.add_argument('--ref', default=None, help='Original signal, for the aligned PSNR')
    p.add_argument('--out', required=True)
    p.add_argument('--report', default=None)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser('sweep', help='Reconstruction error against descriptor count')
    _common(p)
    _bank_args(p)
    _selection_args(p)
    _recovery_args(p)
    p.add_argument('--delta', dest='delta_list', default='1,2,3,4', help='Comma-separated delta values')
    p.add_argument('--kind', choices=('piecewise', 'modcos', 'cartoon'), default='piecewise')
    p.add_argument('--input', default=None)
    p.add_argument('--full', action='store_true', help='256x256 cartoon image')
    p.add_argument('--out', default=None, help='CSV path (also printed)')
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('hhat', help='Fourier table of a phase filter')
    _common(p)
    p.add_argument('--kind', choices=[k for k in FILTER_KINDS if k not in ('custom', 'sharpened')], required=True)
    p.add_argument('--kmax', type=int, default=None)
    p.set_defaults(func=cmd_hhat)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logger = setup_environment()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        settings = resolve_settings(args)
        with sfft.set_workers(settings['fft_workers']):
            return args.func(args, settings)
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        return 2
    except Exception as e:
        logger.error(f"Command '{args.command}' failed: {e}", exc_info=True)
        return 1


if __name__ == '__main__':
    sys.exit(main())
