"""
Management command to solve P u = f or a system (P_1, ..., P_n) u = (f_1, ..., f_n).

Writes solution.json, residual.csv (k, lambda, residual, kernel_dim) and
solve.json. Under --strict, structural failures exit 65 and compatibility
failures exit 66.
"""

from analysis.engine.solvers import SolveMethod, solve
from spectra.cli import EXIT_INCOMPATIBLE, EXIT_STRUCTURAL, SpectralCommand
from spectra.engine import formats


class Command(SpectralCommand):
    help = 'Solve a strongly invariant equation or system blockwise'

    def add_command_arguments(self, parser):
        parser.add_argument('--symbol', nargs='*', help='Symbol JSON file(s); several form a system')
        parser.add_argument('--system', type=str, help='System JSON file')
        parser.add_argument('--fields', '--field', nargs='+', dest='fields', help='Right-hand side field(s), one per operator')
        parser.add_argument('--method', choices=SolveMethod.values, default=SolveMethod.AUTO, help='Solver (default: auto)')

    def inputs(self, options):
        return {'spectrum': options.get('spectrum'), 'system': options.get('system'),
                'symbol': ','.join(options.get('symbol') or []) or None,
                'fields': ','.join(options.get('fields') or []) or None, 'method': options['method']}

    def run(self, config, options):
        spectrum = self.load_spectrum(options)
        system = self.load_system(options, spectrum)
        data = self.load_fields(options.get('fields'), spectrum)
        outcome = solve(system, data, options['method'], config)

        formats.dump_field(outcome.solution, self.artifact('solution.json'), self.meta(method=str(outcome.method)))
        self.write_csv('residual.csv', ['k', 'lambda', 'residual', 'kernel_dim'], outcome.residual_rows())
        self.write_json('solve.json', outcome.to_dict())

        for k, deficit in outcome.compat_failures[:10]:
            self.stdout.write(self.style.WARNING(f"  block {k}: data off the range by {deficit:.3g}"))
        for k, m, message in outcome.structural_failures[:10]:
            self.stdout.write(self.style.WARNING(f"  block {k}: {message}"))

        summary = (
            f"{outcome.method} solve: max residual {float(outcome.residual.max()):.3g}, "
            f"{len(outcome.compat_failures)} compatibility and {len(outcome.structural_failures)} structural failures"
        )
        code = 0
        if config.strict and outcome.structural_failures:
            code = EXIT_STRUCTURAL
        elif config.strict and outcome.compat_failures:
            code = EXIT_INCOMPATIBLE
        return self.finish(summary, code)
