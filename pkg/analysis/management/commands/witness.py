"""
Management command to construct a counterexample field.

Writes witness_u.json, one witness_image_<j>.json per operator, witness.json
(construction log, decay reports, partial norms) and witness_decay.csv with
the block norms of u and of every image.
"""

from analysis.engine.witnesses import (
    WitnessKind,
    agh_failure_witness,
    commuting_failure_witness,
    gh_failure_witness,
    kernel_separation_check,
    kernel_witness,
)
from spectra.cli import SpectralCommand
from spectra.engine import formats


class Command(SpectralCommand):
    help = 'Build a kernel, GH, AGH or commuting-system failure witness'

    def add_command_arguments(self, parser):
        parser.add_argument('kind', choices=WitnessKind.values, help='Witness construction')
        parser.add_argument('--symbol', nargs='*', help='Symbol JSON file(s); several form a system')
        parser.add_argument('--system', type=str, help='System JSON file')
        parser.add_argument('--count', type=int, default=10, help='Number of blocks to select (default: 10)')
        parser.add_argument('--s', type=float, default=0.0, dest='sobolev', help='Sobolev index s for agh (default: 0)')
        parser.add_argument('--rho', type=float, default=3.0, help='rho > dim for agh (default: 3)')
        parser.add_argument('--separation-trials', type=int, default=0,
                            help='Random kernel fields to test ||u + v|| >= ||u|| against')

    def inputs(self, options):
        return {'spectrum': options.get('spectrum'), 'system': options.get('system'),
                'symbol': ','.join(options.get('symbol') or []) or None, 'kind': options['kind']}

    def run(self, config, options):
        spectrum = self.load_spectrum(options)
        system = self.load_system(options, spectrum)
        config = self.calibrate(config, options)
        kind = options['kind']
        if kind == WitnessKind.KERNEL:
            bundle = kernel_witness(system, config)
        elif kind == WitnessKind.GH:
            bundle = gh_failure_witness(system, options['count'], config)
        elif kind == WitnessKind.AGH:
            bundle = agh_failure_witness(system, options['sobolev'], options['rho'], options['count'], config)
        else:
            bundle = commuting_failure_witness(system, options['count'], config)

        log = bundle.to_dict()
        if options['separation_trials']:
            check = kernel_separation_check(bundle, system, options['separation_trials'], config.seed, config)
            log['separation'] = {'trials': check.trials, 'worst_margin': check.worst_margin, 'passed': check.passed}
            self.stdout.write(f"  kernel separation over {check.trials} trials: worst margin {check.worst_margin:.3g}")

        meta = self.meta(witness=str(kind))
        formats.dump_field(bundle.u, self.artifact('witness_u.json'), meta)
        for j, image in enumerate(bundle.images):
            formats.dump_field(image, self.artifact(f'witness_image_{j}.json'), meta)
        self.write_json('witness.json', log)

        lam = spectrum.eigenvalues
        rows = [
            [k, float(lam[k]), float(bundle.u.block_norms[k])] + [float(v.block_norms[k]) for v in bundle.images]
            for k in range(spectrum.truncation)
        ]
        header = ['k', 'lambda', 'u_norm'] + [f'image_{j}_norm' for j in range(len(bundle.images))]
        self.write_csv('witness_decay.csv', header, rows)

        for note in bundle.notes:
            self.stdout.write(f"  {note}")
        images = ', '.join(str(d.decay_class) for d in bundle.image_decays)
        return self.finish(
            f"{kind} witness on {len(bundle.construction_log)} blocks: u {bundle.u_decay.decay_class}, images {images}"
        )
