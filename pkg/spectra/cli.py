"""
Shared plumbing for the spectral management commands.

Every command reads the same tolerance flags into a ``RunConfig``, records
itself in the run ledger and maps failures onto stable exit codes:

    0-3   diagnostic verdicts (GH / GS only / not GS / inconclusive)
    64    malformed input: unreadable or invalid files, mismatched spectra
    65    structural or precondition failure
    66    compatibility failure under --strict
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from audit.services import RunRecorder, record_run
from spectra.config import EXACT_ZERO_TOLERANCE, RunConfig
from spectra.engine import formats
from spectra.engine.fields import CoefficientField
from spectra.engine.spectrum import SpectrumModel
from spectra.engine.symbols import SystemSymbol
from spectra.exceptions import (
    InsufficientSamplesError,
    PreconditionError,
    SpectrumMismatchError,
    StructuralError,
)

logger = logging.getLogger(__name__)

EXIT_MALFORMED = 64
EXIT_STRUCTURAL = 65
EXIT_INCOMPATIBLE = 66


class SpectralCommand(BaseCommand):
    """Base for commands that take the common tolerance flags and write artifacts."""

    uses_spectrum = True

    def add_arguments(self, parser):
        if self.uses_spectrum:
            parser.add_argument('--spectrum', type=str, help='Spectrum JSON file')
        parser.add_argument('--out', type=str, default='.', help='Output directory (default: current directory)')
        parser.add_argument('--ztol-abs', type=float, help='Absolute zero threshold for singular values')
        parser.add_argument('--ztol-rel', type=float, help='Relative zero threshold (times block norm and size)')
        parser.add_argument('--exact', action='store_true',
                            help='Exact zero thresholds (1e-300) for exactly represented symbols; '
                                 'torus field symbols request this through their calibration meta')
        parser.add_argument('--tol', type=float, dest='compat_tol', help='Compatibility tolerance')
        parser.add_argument('--angle-min', type=float, help='Minimum transversality angle (radians)')
        parser.add_argument('--normal-tol', type=float, help='Normality / commutation tolerance')
        parser.add_argument('--tail', type=float, dest='tail_fraction', help='Tail fraction used for fits')
        parser.add_argument('--n-probe', type=float,
                            help='Polynomial exponent probe bound (default: the symbol calibration, else SPECTRAL_N_PROBE)')
        parser.add_argument('--min-samples', type=int, help='Minimum positive tail samples for a fit')
        parser.add_argument('--seed', type=int, help='Random seed')
        parser.add_argument('--workers', type=int, help='Worker threads for per-block work')
        parser.add_argument('--strict', action='store_true', help='Fail on compatibility or structural failures')
        parser.add_argument('--no-record', action='store_true', help='Do not record this run in the ledger')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    # --- configuration -------------------------------------------------------

    def build_config(self, options) -> RunConfig:
        overrides = {
            key: options.get(key)
            for key in (
                'ztol_abs', 'ztol_rel', 'compat_tol', 'angle_min', 'normal_tol',
                'tail_fraction', 'n_probe', 'min_samples', 'seed', 'workers',
            )
        }
        if options.get('exact'):
            overrides['ztol_abs'] = overrides['ztol_abs'] or EXACT_ZERO_TOLERANCE
            overrides['ztol_rel'] = overrides['ztol_rel'] or EXACT_ZERO_TOLERANCE
        overrides['strict'] = bool(options.get('strict'))
        try:
            return RunConfig.from_settings(**overrides)
        except ValueError as exc:
            raise CommandError(str(exc), returncode=EXIT_MALFORMED)

    def inputs(self, options) -> Dict[str, Any]:
        """Input paths recorded in the ledger."""
        return {'spectrum': options.get('spectrum')}

    # --- execution -----------------------------------------------------------

    def handle(self, *args, **options):
        config = self.build_config(options)
        self.out_dir = Path(options['out'])
        self.config = config
        code = 0
        with record_run(self.command_name(), config, self.inputs(options), enabled=not options['no_record']) as recorder:
            self.recorder: RunRecorder = recorder
            try:
                code = self.run(config, options) or 0
            except CommandError:
                raise
            except (ValidationError, SpectrumMismatchError, json.JSONDecodeError, OSError) as exc:
                raise CommandError(self.describe_error(exc), returncode=EXIT_MALFORMED) from exc
            except (StructuralError, PreconditionError, InsufficientSamplesError) as exc:
                raise CommandError(str(exc), returncode=EXIT_STRUCTURAL) from exc
        if code:
            raise CommandError(self.recorder.message or f'exit status {code}', returncode=code)

    def run(self, config: RunConfig, options) -> Optional[int]:
        raise NotImplementedError('subclasses of SpectralCommand must provide a run() method')

    def command_name(self) -> str:
        return self.__module__.rsplit('.', 1)[-1]

    @staticmethod
    def describe_error(exc: Exception) -> str:
        if isinstance(exc, ValidationError):
            return '; '.join(exc.messages)
        return str(exc)

    # --- inputs --------------------------------------------------------------

    @staticmethod
    def require(options, key: str):
        value = options.get(key)
        if not value:
            raise CommandError(f"--{key.replace('_', '-')} is required", returncode=EXIT_MALFORMED)
        return value

    def load_spectrum(self, options) -> SpectrumModel:
        return formats.load_spectrum(self.require(options, 'spectrum'))

    def load_system(self, options, spectrum: SpectrumModel) -> SystemSymbol:
        """--system FILE, or one or more --symbol FILE read as a system."""
        if options.get('system'):
            return formats.load_system(options['system'], spectrum, self.config.strict)
        symbols = options.get('symbol') or []
        if not symbols:
            raise CommandError('give --symbol or --system', returncode=EXIT_MALFORMED)
        return SystemSymbol(tuple(formats.load_symbol(path, spectrum, self.config.strict) for path in symbols))

    def calibrate(self, config: RunConfig, options) -> RunConfig:
        """Apply the symbol files' calibration meta wherever no flag overrides it."""
        paths = [options['system']] if options.get('system') else list(options.get('symbol') or [])
        calibration = formats.read_calibration(paths)
        changes: Dict[str, Any] = {}
        if calibration.get('exact') and options.get('ztol_abs') is None and options.get('ztol_rel') is None:
            changes.update(ztol_abs=EXACT_ZERO_TOLERANCE, ztol_rel=EXACT_ZERO_TOLERANCE)
        if calibration.get('n_probe') is not None and options.get('n_probe') is None:
            changes['n_probe'] = float(calibration['n_probe'])
        if not changes:
            return config
        logger.info(f"using the input calibration {changes}")
        self.config = config.replace(**changes)
        self.recorder.update_config(self.config)
        return self.config

    def load_fields(self, paths: Optional[List[str]], spectrum: SpectrumModel) -> List[CoefficientField]:
        if not paths:
            raise CommandError('give at least one --field', returncode=EXIT_MALFORMED)
        return [formats.load_field(path, spectrum, self.config.strict) for path in paths]

    # --- outputs -------------------------------------------------------------

    def meta(self, **extra) -> Dict[str, Any]:
        meta = {
            'command': self.command_name(),
            'config_hash': self.config.config_hash(),
            'seed': self.config.seed,
        }
        meta.update(extra)
        return meta

    def artifact(self, name: str) -> Path:
        path = self.out_dir / name
        self.recorder.add_artifact(path)
        return path

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        return formats.write_json(payload, self.artifact(name))

    def write_csv(self, name: str, header, rows) -> Path:
        return formats.write_csv(self.artifact(name), header, rows)

    def finish(self, message: str, code: int = 0, verdict: str = '') -> int:
        """Report the outcome; a nonzero code becomes the process exit status."""
        self.recorder.message = message
        if verdict:
            self.recorder.set_verdict(verdict, code)
        else:
            self.recorder.exit_code = code
        style = self.style.SUCCESS if code == 0 else self.style.WARNING
        self.stdout.write(style(message))
        return code
