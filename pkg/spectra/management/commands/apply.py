from spectra.cli import SpectralCommand
from spectra.engine import formats
from spectra.engine.fields import decay_classify, l2_norm, norm_rows
from spectra.engine.symbols import apply


class Command(SpectralCommand):
    help = 'Apply a symbol to a field and write the image field'

    def add_command_arguments(self, parser):
        parser.add_argument('--symbol', type=str, help='Symbol JSON file')
        parser.add_argument('--field', type=str, help='Field JSON file')
        parser.add_argument('--name', type=str, default='image', help='Output file stem (default: image)')

    def inputs(self, options):
        return {key: options.get(key) for key in ('spectrum', 'symbol', 'field')}

    def run(self, config, options):
        spectrum = self.load_spectrum(options)
        symbol = formats.load_symbol(self.require(options, 'symbol'), spectrum, config.strict)
        u = formats.load_field(self.require(options, 'field'), spectrum, config.strict)
        image = apply(symbol, u)
        name = options['name']
        formats.dump_field(image, self.artifact(f'{name}.json'), self.meta(symbol=symbol.name))
        self.write_csv(f'{name}_norms.csv', ['k', 'lambda', 'norm'], norm_rows(image))
        decay = decay_classify(image, config.tail_fraction, config.n_probe, config.min_samples)
        return self.finish(f"image l2 norm {l2_norm(image):.6g}, decay {decay.decay_class}")
