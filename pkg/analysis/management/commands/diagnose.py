"""
Management command to run a hypoellipticity / solvability diagnosis.

Writes report.json (full report) and gains.csv (k, lambda, gain, kernel_dim)
and exits with the verdict code: 0 GH, 1 GS only, 2 not GS, 3 inconclusive.
A calibration stored in the symbol meta sets the zero thresholds and probe
exponent unless flags give them.
"""

from analysis.engine.diagnostics import DiagnosticMode, diagnose
from spectra.cli import SpectralCommand


class Command(SpectralCommand):
    help = 'Diagnose global hypoellipticity and solvability of a symbol or system'

    def add_command_arguments(self, parser):
        parser.add_argument('--symbol', nargs='*', help='Symbol JSON file(s); several form a system')
        parser.add_argument('--system', type=str, help='System JSON file')
        parser.add_argument('--mode', choices=['auto'] + DiagnosticMode.values, default='auto',
                            help='Diagnostic to run (default: auto-detect from structure)')

    def inputs(self, options):
        return {'spectrum': options.get('spectrum'), 'system': options.get('system'),
                'symbol': ','.join(options.get('symbol') or []) or None, 'mode': options['mode']}

    def run(self, config, options):
        spectrum = self.load_spectrum(options)
        system = self.load_system(options, spectrum)
        config = self.calibrate(config, options)
        report = diagnose(system, options['mode'], config)

        self.write_json('report.json', report.to_dict())
        self.write_csv('gains.csv', ['k', 'lambda', 'gain', 'kernel_dim'], report.curve.rows())
        if report.solvability_curve is not None:
            self.write_csv('gains_restricted.csv', ['k', 'lambda', 'gain', 'kernel_dim'], report.solvability_curve.rows())

        fit = report.solvability_fit
        if fit is not None:
            self.stdout.write(
                f"  gain >= {fit.C:.4g} (1 + lambda)^{fit.gamma:.4g} on blocks {fit.window[0]}..{fit.window[1]}"
                f" (least squares {fit.ls_gamma:.4g}, min effective exponent {fit.min_effective_exponent:.4g})"
            )
        self.stdout.write(f"  kernel blocks: {len(report.z_census.members)}, finite-looking: {report.z_census.finite}")
        for note in report.notes:
            self.stdout.write(self.style.WARNING(f"  {note}"))
        self.stdout.write(f"  {report.truncation_note}")
        return self.finish(f"{report.mode}: {report.verdict}", report.exit_code, report.verdict)
