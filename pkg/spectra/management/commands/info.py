"""
Management command to summarize a spectrum and, optionally, symbols on it:
multiplicity growth, summability of the counting series, estimated orders,
normality and pairwise commutation. The running partial sums of the
counting series go to summability.csv.
"""

from spectra.cli import SpectralCommand
from spectra.engine.spectrum import multiplicity_growth_constant, summability_partial, summability_trace
from spectra.engine.symbols import commuting_blocks, estimate_order, is_normal
from spectra.exceptions import InsufficientSamplesError


class Command(SpectralCommand):
    help = 'Describe a spectrum and the structure of the given symbols'

    def add_command_arguments(self, parser):
        parser.add_argument('--symbol', nargs='*', help='Symbol JSON files')
        parser.add_argument('--system', type=str, help='System JSON file')

    def inputs(self, options):
        return {'spectrum': options.get('spectrum'), 'system': options.get('system'),
                'symbol': ','.join(options.get('symbol') or []) or None}

    def run(self, config, options):
        spectrum = self.load_spectrum(options)
        growth, worst = multiplicity_growth_constant(spectrum)
        q = spectrum.manifold_dim / spectrum.elliptic_order + 1.0
        trace = summability_trace(spectrum, q)
        summary = {
            'spectrum': {
                'describe': spectrum.describe(),
                'spectrum_hash': spectrum.spectrum_hash,
                'growth_constant': growth,
                'growth_attained_at': worst,
                'summability_q': q,
                'summability_partial': summability_partial(spectrum, q),
                'summability_last_increment': float(trace[-1] - trace[-2]) if trace.size > 1 else float(trace[-1]),
            },
            'operators': [],
        }
        self.stdout.write(spectrum.describe())
        self.stdout.write(f"  d_k <= {growth:.4g} (1 + lambda_k)^(d/nu), attained at k={worst}")
        self.stdout.write(f"  sum d_k (1 + lambda_k)^(-{q:g}) over stored blocks = {summary['spectrum']['summability_partial']:.6g}")
        self.write_csv(
            'summability.csv', ['k', 'lambda', 'partial_sum'],
            ([k, float(lam), float(total)] for k, (lam, total) in enumerate(zip(spectrum.eigenvalues, trace))),
        )

        if options.get('system') or options.get('symbol'):
            system = self.load_system(options, spectrum)
            for j, op in enumerate(system.operators):
                normality = is_normal(op, config.normal_tol)
                try:
                    order = estimate_order(op, config.tail_fraction, config.min_samples)
                except InsufficientSamplesError:
                    order = None
                entry = {
                    'index': j,
                    'name': op.name,
                    'estimated_order': order,
                    'normal': normality.normal,
                    'non_normal_blocks': normality.failing,
                    'diagonal': all(op.diagonal_blocks),
                }
                summary['operators'].append(entry)
                order_text = f"{order:.3g}" if order is not None else 'n/a'
                self.stdout.write(
                    f"  [{j}] {op.name or 'unnamed'}: order ~ {order_text}, "
                    f"{'normal' if normality else f'{len(normality.failing)} non-normal blocks'}"
                )
            if system.n > 1:
                flags = commuting_blocks(system, config.normal_tol)
                failing = [k for k, ok in enumerate(flags) if not ok]
                summary['commuting'] = not failing
                summary['non_commuting_blocks'] = failing
                self.stdout.write(f"  pairwise commuting: {'yes' if not failing else f'no ({len(failing)} blocks)'}")

        self.write_json('info.json', summary)
        return self.finish(f"wrote {self.out_dir / 'info.json'}")
