"""
Management command to check the structured system solvers against the
stacked least-squares oracle on identical inputs.
"""

from analysis.engine.solvers import (
    SolveMethod,
    max_block_deviation,
    solve_system_commuting,
    solve_system_lsq,
    solve_system_normal,
)
from analysis.engine.diagnostics import require_normal
from spectra.cli import SpectralCommand
from spectra.engine.symbols import commuting_blocks


class Command(SpectralCommand):
    help = 'Compare the normal / commuting solvers with the least-squares oracle'

    def add_command_arguments(self, parser):
        parser.add_argument('--symbol', nargs='*', help='Symbol JSON file(s); several form a system')
        parser.add_argument('--system', type=str, help='System JSON file')
        parser.add_argument('--fields', '--field', nargs='+', dest='fields', help='Right-hand side field(s)')
        parser.add_argument('--max-deviation', type=float, default=1e-8,
                            help='Relative blockwise deviation counted as agreement (default: 1e-8)')

    def inputs(self, options):
        return {'spectrum': options.get('spectrum'), 'system': options.get('system'),
                'symbol': ','.join(options.get('symbol') or []) or None,
                'fields': ','.join(options.get('fields') or []) or None}

    def run(self, config, options):
        spectrum = self.load_spectrum(options)
        system = self.load_system(options, spectrum)
        data = self.load_fields(options.get('fields'), spectrum)
        require_normal(system, config)

        oracle = solve_system_lsq(system, data, config)
        solvers = {SolveMethod.NORMAL: solve_system_normal}
        if all(commuting_blocks(system, config.normal_tol)):
            solvers[SolveMethod.COMMUTING] = solve_system_commuting

        comparison = {'oracle_max_residual': float(oracle.residual.max()), 'methods': {}}
        worst = 0.0
        for method, solver in solvers.items():
            outcome = solver(system, data, config)
            deviation = max_block_deviation(outcome.solution, oracle.solution)
            worst = max(worst, deviation)
            comparison['methods'][str(method)] = {
                'max_deviation': deviation,
                'max_residual': float(outcome.residual.max()),
                'structural_failures': len(outcome.structural_failures),
            }
            self.stdout.write(f"  {method}: max blockwise deviation {deviation:.3g}")
        comparison['max_deviation'] = worst
        comparison['agrees'] = worst <= options['max_deviation']
        comparison['config_hash'] = config.config_hash()
        self.write_json('oracle.json', comparison)

        if not comparison['agrees']:
            self.stdout.write(self.style.WARNING(f"  deviation exceeds {options['max_deviation']:g}"))
        return self.finish(f"oracle comparison: max deviation {worst:.3g}")
