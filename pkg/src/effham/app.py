"""
effham command-line tool.

    effham derive   [--preset NAME | --scenario FILE] --order N --out DIR
    effham simulate [--preset NAME | --scenario FILE] --mode {full,effective,both} ...
    effham oracle   [--preset NAME | --scenario FILE] --order N --window T0:T1

Every run writes its outputs plus a manifest.json into --out. Several values
after --lambda run the command once per value, concurrently, each into its own
sub-directory. Exit codes follow effham.errors.
"""
import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from effham.common import ERROR, INFO, STEP_GUARD, set_verbosity
from effham.decomposition import (FrequencyDecomposition, decomposition_hash, dump_scenario, load_scenario,
                                  max_frequency)
from effham.dynamics import DEFAULT_SAMPLES, SCHEMES, StateVector, compare, propagate_effective, propagate_full
from effham.dyson import secular_rate_check
from effham.effective import DegeneracyPolicy, effective_sum, effn, get_generator
from effham.errors import EffhamError, OracleMismatch, ScenarioError, UsageError
from effham.hilbert import Operator, basis_index, basis_label
from effham.scenarios import (ScenarioName, ScenarioParams, build_scenario, compensated_rabi, preset_params,
                              stark_counter_term)
from effham.utils import code_version, fmt_float, get_path, parse_window, utc_timestamp, write_to_file

ORACLE_TOLERANCE = 0.05
DT_SAFETY = 0.8


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f'{self.prog}: {message}')


@dataclass
class RunManifest:
    command: List[str]
    scenario_hash: str
    params: dict
    version: str
    started: str
    finished: str = ''
    outputs: List[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            'command': self.command,
            'scenario_hash': self.scenario_hash,
            'params': self.params,
            'version': self.version,
            'started': self.started,
            'finished': self.finished,
            'outputs': sorted(self.outputs),
        }


@dataclass
class Run:
    """One resolved invocation: the decomposition, its preset (if any) and the output directory."""
    args: argparse.Namespace
    d: FrequencyDecomposition
    preset: Optional[ScenarioParams]
    out_dir: str
    manifest: RunManifest

    def write(self, output, name: str) -> str:
        path = write_to_file(output, os.path.join(self.out_dir, name))
        self.manifest.outputs.append(name)
        return path


def _add_source_args(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument('--preset', type=str, help='built-in scenario: rabi, two_atom or their full names')
    src.add_argument('--scenario', type=str, help='scenario JSON file')
    p.add_argument('--lambda', dest='lambdas', type=float, nargs='+',
                   help='coupling in base units; several values run a parameter scan')
    p.add_argument('--cutoff', type=int, help='boson cutoff (presets only)')
    p.add_argument('--n-initial', type=int, help='initial Fock occupation (presets only)')
    p.add_argument('--theta', type=str, help='mixing angle, e.g. "pi/4" (two_atom preset only)')
    p.add_argument('--out', type=str, default='effham_out', help='output directory, default to %(default)s')


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog='effham', description='Effective Hamiltonians of frequency-decomposed '
                                                        'Hamiltonians, with numerical checks')
    parser.add_argument('-v', '--verbose', action='store_true', help='enable verbose output mode')
    parser.add_argument('-q', '--quiet', action='store_true', help='enable quiet output mode')
    parser.add_argument('--version', action='version', version=f'%(prog)s {code_version()}')
    sub = parser.add_subparsers(dest='command', required=True)

    derive = sub.add_parser('derive', help='derive an effective Hamiltonian')
    _add_source_args(derive)
    derive.add_argument('--order', type=int, default=3, help='perturbative order, default to %(default)s')
    derive.add_argument('--method', choices=('generic', 'explicit'), default='generic',
                        help='generic tail-sum rule or the explicit order-2/3 formulas')
    derive.add_argument('--policy', choices=[p.value for p in DegeneracyPolicy], default='raise',
                        help='what to do with degenerate resonances, default to %(default)s')
    derive.set_defaults(func=cmd_derive)

    simulate = sub.add_parser('simulate', help='propagate the full and/or effective dynamics')
    _add_source_args(simulate)
    simulate.add_argument('--mode', choices=('full', 'effective', 'both'), default='both')
    simulate.add_argument('--order', type=int, default=3, help='effective generator is the sum of orders 2..N')
    simulate.add_argument('--t-final', type=float, help='run length in 1/base-frequency units')
    simulate.add_argument('--dt', type=float, help='integration step in 1/base-frequency units')
    simulate.add_argument('--samples', type=int, help='number of output intervals')
    simulate.add_argument('--initial', type=str, help='initial basis label, e.g. "g,3" or "gg,1"')
    simulate.add_argument('--observe', type=str, nargs='*', default=(), help='extra basis labels to report')
    simulate.add_argument('--scheme', choices=SCHEMES, default='magnus4')
    simulate.add_argument('--compensate-stark', action='store_true',
                          help='detune the cavity to cancel the second-order Stark splitting (rabi preset)')
    simulate.set_defaults(func=cmd_simulate)

    oracle = sub.add_parser('oracle', help='check effective couplings against the Dyson series')
    _add_source_args(oracle)
    oracle.add_argument('--order', type=int, default=3)
    oracle.add_argument('--window', type=str, default='0:80', help='fit window t0:t1, default to %(default)s')
    oracle.add_argument('--dt', type=float, default=0.002, help='series step, default to %(default)s')
    oracle.add_argument('--initial', type=str, help='initial basis label')
    oracle.set_defaults(func=cmd_oracle)

    return parser


def _resolve(args: argparse.Namespace, lam: Optional[float]) -> Tuple[FrequencyDecomposition, Optional[ScenarioParams]]:
    if args.preset:
        p = preset_params(args.preset, lambda_over_base=lam, cutoff=args.cutoff, n_initial=args.n_initial,
                          theta=args.theta)
        return build_scenario(p), p

    if args.cutoff is not None or args.n_initial is not None or args.theta is not None:
        raise UsageError('--cutoff, --n-initial and --theta apply to presets only')
    d = load_scenario(args.scenario)
    if lam is not None:
        data = dump_scenario(d)
        if 'lambda' not in data['params']:
            raise ScenarioError('--lambda given but the scenario has no "lambda" parameter')
        data['params']['lambda'] = lam
        d = load_scenario(data)
    return d, None


def _open_run(args: argparse.Namespace, argv: Sequence[str], lam: Optional[float], out_dir: str) -> Run:
    started = utc_timestamp()
    d, preset = _resolve(args, lam)
    # presets record their parameters, scenario files their params block
    params = preset.to_json() if preset else dict(sorted(d.params.items()))
    manifest = RunManifest(list(argv), decomposition_hash(d), params, code_version(), started)
    run = Run(args, d, preset, get_path(out_dir), manifest)
    run.write(dump_scenario(d), 'scenario.json')
    return run


def _close_run(run: Run):
    run.manifest.finished = utc_timestamp()
    write_to_file(run.manifest.to_json(), os.path.join(run.out_dir, 'manifest.json'))


def cmd_derive(run: Run) -> int:
    args = run.args
    generator = get_generator(args.order, args.method, DegeneracyPolicy(args.policy))
    H = generator(run.d)
    payload = H.to_json()
    payload['omegas'] = [str(w) for w in run.d.omegas]
    payload['scenario_hash'] = run.manifest.scenario_hash
    run.write(payload, f'effective_order{args.order}.json')
    INFO(f'order {args.order} ({args.method}): {len(H.ledger)} resonances, nnz {H.total.nnz}, '
         f'hermitian defect {H.hermitian_defect():.3e}, {len(H.degeneracy_report)} degenerate')
    return 0


def _default_dt(d: FrequencyDecomposition) -> float:
    return DT_SAFETY * STEP_GUARD / float(max_frequency(d))


def _default_t_final(H: Operator, initial: str, final: Optional[str]) -> float:
    # three population periods of the resonant pair
    if final is not None:
        coupling = abs(H.element(basis_index(H.space, final), basis_index(H.space, initial)))
        if coupling > 0:
            return 3 * math.pi / coupling
    return 100.0


def cmd_simulate(run: Run) -> int:
    """
    Propagate one initial basis state with the full H(t), the effective
    generator, or both, and write trajectories, populations and a comparison.

    Parameters:
        run: opened run; ``run.args`` carries mode, order, dt, t_final,
            samples, scheme, initial, observe and compensate_stark

    Returns:
        0 on success; failures raise an EffhamError subclass
    """
    args, d, p = run.args, run.d, run.preset

    # 1. initial state and the observables to report
    pair = p.resonant_pair() if p else None
    initial = args.initial or (pair[0] if pair else None)
    if initial is None:
        raise UsageError('--initial is required for scenario files')
    initial = basis_label(d.space, basis_index(d.space, initial))
    final = pair[1] if pair and initial == pair[0] else None
    observables = [initial] + ([final] if final else []) + list(args.observe)

    # 2. effective generator, optionally with the stark counter-term
    H_eff = effective_sum(d, args.order)
    full_d, frame = d, None
    if args.compensate_stark:
        if p is None or p.name != ScenarioName.RABI:
            raise UsageError('--compensate-stark needs the rabi preset')
        full_d, delta = compensated_rabi(p)
        frame = stark_counter_term(d.space, delta)
        H_eff = H_eff + frame
        run.manifest.params['stark_delta'] = str(delta)
        # hash of the decomposition actually propagated
        run.manifest.params['compensated_scenario_hash'] = decomposition_hash(full_d)
        run.write(dump_scenario(full_d), 'scenario_compensated.json')

    # 3. time axis
    psi0 = StateVector.basis(d.space, initial)
    dt = args.dt or _default_dt(full_d)
    t_final = args.t_final or _default_t_final(H_eff, initial, final)
    run.manifest.params.update({'mode': args.mode, 'order': args.order, 'dt': fmt_float(dt),
                                't_final': fmt_float(t_final), 'initial': initial, 'scheme': args.scheme})

    # 4. propagate
    full = eff = None
    if args.mode in ('full', 'both'):
        full = propagate_full(full_d, psi0, t_final, dt, samples=args.samples, scheme=args.scheme)
        run.write(full.csv_rows(), 'trajectory_full.csv')
        run.write(full.describe(), 'trajectory_full.json')
        if frame is not None:
            full = full.to_frame(frame)
    if args.mode in ('effective', 'both'):
        # exact at any spacing; sample like propagate_full
        if full is not None:
            grid = full.grid
        else:
            grid = np.linspace(0.0, t_final, (args.samples or DEFAULT_SAMPLES) + 1)
        eff = propagate_effective(H_eff, psi0, t_final, dt, grid=grid)
        run.write(eff.csv_rows(), 'trajectory_effective.csv')
        run.write(eff.describe(), 'trajectory_effective.json')

    # 5. populations and, with both trajectories, the comparison
    for name, traj in (('full', full), ('effective', eff)):
        if traj is not None:
            run.write(traj.population_rows(observables), f'populations_{name}.csv')

    if full is not None and eff is not None:
        report = compare(full, eff, observables)
        run.write(report.to_json(), 'comparison.json')
        for obs in report.observables:
            INFO(f'{obs}: max |dP| {report.max_deviation[obs]:.3e}, frequency full {report.frequency_full[obs]:.6e} '
                 f'vs effective {report.frequency_effective[obs]:.6e} ({100 * report.frequency_error(obs):.2f}%)')
        INFO(f'fidelity floor {report.fidelity_floor:.6f}')
    return 0


def _oracle_rows(H: Operator, initial: str, final: Optional[str]) -> List[str]:
    """Every state H couples to ``initial``, plus the scenario's resonant partner."""
    column = H.matrix.getcol(basis_index(H.space, initial)).tocoo()
    rows = {int(r) for r in column.row}
    if final is not None:
        rows.add(basis_index(H.space, final))
    return [basis_label(H.space, r) for r in sorted(rows)]


def cmd_oracle(run: Run) -> int:
    args, d, p = run.args, run.d, run.preset
    window = parse_window(args.window)
    pair = p.resonant_pair() if p else None
    initial = args.initial or (pair[0] if pair else basis_label(d.space, 0))
    initial = basis_label(d.space, basis_index(d.space, initial))
    final = pair[1] if pair and initial == pair[0] else None

    H = effn(d, args.order).total
    rows = []
    # generator element against the fitted secular slope, per coupled state
    for label in _oracle_rows(H, initial, final):
        predicted = abs(H.element(basis_index(d.space, label), basis_index(d.space, initial)))
        measured = secular_rate_check(d, args.order, window, initial, label, dt=args.dt)
        rows.append({'initial': initial, 'final': label, 'predicted': predicted, 'measured': measured})

    # rows predicted to vanish are judged against the largest predicted coupling
    scale = max([r['predicted'] for r in rows] + [0.0])
    if scale == 0:
        scale = max(float(np.abs(t.h.matrix.data).max()) for t in d.terms) ** args.order
    failed = False
    for r in rows:
        if r['predicted'] > 0:
            r['relative_error'] = abs(r['measured'] - r['predicted']) / r['predicted']
        else:
            r['relative_error'] = r['measured'] / scale
        r['ok'] = r['relative_error'] <= ORACLE_TOLERANCE
        failed |= not r['ok']

    # table on stdout
    print(f'{"transition":<24}{"generator":>16}{"dyson slope":>16}{"rel. error":>12}')
    for r in rows:
        transition = f'|{r["initial"]}> -> |{r["final"]}>'
        print(f'{transition:<24}{r["predicted"]:>16.6e}{r["measured"]:>16.6e}{r["relative_error"]:>12.3%}')

    run.manifest.params.update({'order': args.order, 'window': args.window, 'dt': fmt_float(args.dt),
                                'initial': initial})
    run.write({'order': args.order, 'window': list(window), 'tolerance': ORACLE_TOLERANCE,
               'rows': [{k: (fmt_float(v) if isinstance(v, float) else v) for k, v in r.items()} for r in rows]},
              f'oracle_order{args.order}.json')
    if failed:
        raise OracleMismatch(f'{sum(not r["ok"] for r in rows)} transition(s) differ by more than '
                             f'{ORACLE_TOLERANCE:.0%} from the Dyson series')
    return 0


def _run_one(args: argparse.Namespace, argv: Sequence[str], lam: Optional[float], out_dir: str) -> int:
    try:
        run = _open_run(args, argv, lam, out_dir)
        try:
            return args.func(run)
        finally:
            _close_run(run)
    except EffhamError as e:
        ERROR(str(e))
        return e.exit_code


def _scan_workers() -> int:
    value = os.environ.get('EFFHAM_THREADS')
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise UsageError(f'EFFHAM_THREADS must be an integer, got "{value}"')
    return os.cpu_count() or 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        set_verbosity(args.verbose, args.quiet)
        lambdas = args.lambdas or [None]
        # a single value runs in this process
        if len(lambdas) == 1:
            return _run_one(args, argv, lambdas[0], args.out)

        workers = min(_scan_workers(), len(lambdas))
        INFO(f'parameter scan over {len(lambdas)} values of lambda, {workers} worker(s)')
        # repr keeps every digit
        out_dirs = [os.path.join(args.out, f'lambda_{lam!r}') for lam in lambdas]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            codes = list(pool.map(_run_one, [args] * len(lambdas), [argv] * len(lambdas), lambdas, out_dirs))
        return next((c for c in codes if c != 0), 0)
    except EffhamError as e:
        ERROR(str(e))
        return e.exit_code


def entry_point():
    sys.exit(main())


if __name__ == '__main__':
    entry_point()
