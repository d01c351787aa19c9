"""
Management command to build a spectral model and its symbols.

    model torus --dim 2 --radius-sq 400 --coefficients 1 golden --probe-shells
    model torus --dim 2 --radius-sq 100 --coordinate-system
    model sphere --degree-max 100
    model synthetic --spectrum spectrum.json --recipe planted_gain --profile power:-1

Writes spectrum.json plus symbol / system files into --out, and optionally a
synthetic field (--field-profile).

Torus field symbols carry a "calibration" meta entry (exact zero thresholds,
and the probe exponent when probe shells are stored) that diagnose and
witness take as their defaults.
"""

from django.core.management.base import CommandError

from spectra.cli import EXIT_MALFORMED, SpectralCommand
from spectra.engine import formats
from spectra.engine.catalog import (
    DEFAULT_Q_MAX,
    PROBED_TORUS_N_PROBE,
    Profile,
    SyntheticRecipe,
    as_coefficients,
    probe_shells_for,
    sphere_rotation_field,
    sphere_spectrum,
    synthetic_field,
    synthetic_symbol,
    torus_coordinate_system,
    torus_spectrum,
    torus_vector_field,
)


class Command(SpectralCommand):
    help = 'Build a torus, sphere or synthetic model and write its spectrum and symbol files'

    def add_command_arguments(self, parser):
        parser.add_argument('kind', choices=['torus', 'sphere', 'synthetic'], help='Model family')
        parser.add_argument('--dim', type=int, default=2, help='Torus dimension (default: 2)')
        parser.add_argument('--radius-sq', type=int, default=25, help='Torus R^2: store every shell |xi|^2 <= R^2')
        parser.add_argument(
            '--coefficients', nargs='+',
            help='Torus field coefficients: integers, fractions p/q, golden, sqrt(n), liouville[:terms]'
        )
        parser.add_argument('--probe-shells', action='store_true',
                            help='Add the convergent shells beyond R^2 for a 2-torus field')
        parser.add_argument('--q-max', type=int, default=DEFAULT_Q_MAX, help='Largest convergent denominator probed')
        parser.add_argument('--coordinate-system', action='store_true',
                            help='Also write the system of coordinate derivatives d/dx_i')
        parser.add_argument('--degree-max', type=int, default=20, help='Sphere degrees k = 0..K (default: 20)')
        parser.add_argument('--recipe', choices=SyntheticRecipe.values, default=SyntheticRecipe.PLANTED_GAIN,
                            help='Synthetic recipe')
        parser.add_argument('--profile', type=str, help='Block profile: power:c, exp:c or index-power:c')
        parser.add_argument('--kernel-dim', type=int, default=0, help='Planted kernel dimension per block')
        parser.add_argument('--field-profile', type=str, help='Also write a synthetic field with this profile')

    def inputs(self, options):
        return {'spectrum': options.get('spectrum'), 'kind': options['kind']}

    def run(self, config, options):
        kind = options['kind']
        builder = getattr(self, f'build_{kind}')
        spectrum, written = builder(config, options)
        if options.get('field_profile'):
            u = synthetic_field(spectrum, Profile.parse(options['field_profile']), seed=config.seed)
            written.append(formats.dump_field(u, self.artifact('field.json'), self.meta(profile=options['field_profile'])))
        return self.finish(f"{kind} model: {spectrum.describe()}; wrote {len(written)} files to {self.out_dir}")

    def build_torus(self, config, options):
        coefficients = as_coefficients(options['coefficients']) if options.get('coefficients') else None
        probes = []
        if options['probe_shells']:
            if coefficients is None or options['dim'] != 2:
                raise CommandError('--probe-shells needs --coefficients on a 2-torus', returncode=EXIT_MALFORMED)
            probes = probe_shells_for(coefficients, options['radius_sq'], options['q_max'])
        spectrum, model = torus_spectrum(options['dim'], options['radius_sq'], probes)
        meta = self.meta(model=model.describe())
        written = [formats.dump_spectrum(spectrum, self.artifact('spectrum.json'), meta)]
        if coefficients is not None:
            symbol = torus_vector_field(model, coefficients)
            calibration = {'exact': True}
            if probes:
                calibration['n_probe'] = PROBED_TORUS_N_PROBE
            symbol_meta = dict(meta, calibration=calibration)
            written.append(formats.dump_symbol(symbol, self.artifact('symbol.json'), symbol_meta))
            self.stdout.write(f"  {symbol.name}")
        if options['coordinate_system']:
            system = torus_coordinate_system(model)
            paths = []
            for j, op in enumerate(system.operators):
                paths.append(formats.dump_symbol(op, self.artifact(f'coordinate_{j + 1}.json'), meta))
            written.extend(paths)
            written.append(formats.dump_system(
                system, self.artifact('system.json'), meta, operator_paths=[p.name for p in paths]
            ))
        return spectrum, written

    def build_sphere(self, config, options):
        spectrum, model = sphere_spectrum(options['degree_max'])
        meta = self.meta(model=f'sphere degrees 0..{model.degree_max}')
        return spectrum, [
            formats.dump_spectrum(spectrum, self.artifact('spectrum.json'), meta),
            formats.dump_symbol(sphere_rotation_field(model), self.artifact('symbol.json'), meta),
        ]

    def build_synthetic(self, config, options):
        if options.get('spectrum'):
            spectrum = formats.load_spectrum(options['spectrum'])
        else:
            spectrum, _ = sphere_spectrum(options['degree_max'])
        profile = Profile.parse(options['profile']) if options.get('profile') else None
        generated = synthetic_symbol(
            spectrum, options['recipe'], seed=config.seed, profile=profile, kernel_dim=options['kernel_dim']
        )
        meta = self.meta(recipe=generated.recipe, profile=str(profile) if profile else None)
        if generated.planted_gains is not None:
            meta['planted_gains'] = [float(g) for g in generated.planted_gains]
        return spectrum, [
            formats.dump_spectrum(spectrum, self.artifact('spectrum.json'), meta),
            formats.dump_symbol(generated.symbol, self.artifact('symbol.json'), meta),
        ]
