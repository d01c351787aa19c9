from django.core.management.base import CommandError
from django.test import TestCase, override_settings

from audit.models import AnalysisRun
from audit.services import record_run
from spectra.config import RunConfig


class AnalysisRunModelTest(TestCase):
    def test_defaults(self):
        run = AnalysisRun.objects.create(command='diagnose')
        self.assertEqual(run.status, AnalysisRun.Status.RUNNING)
        self.assertFalse(run.is_finished)
        self.assertIn('diagnose', str(run))

    def test_ordering_newest_first(self):
        first = AnalysisRun.objects.create(command='model')
        second = AnalysisRun.objects.create(command='info')
        self.assertEqual(list(AnalysisRun.objects.all()), [second, first])


class RecordRunTest(TestCase):
    def setUp(self):
        self.config = RunConfig(seed=7)

    def test_success_is_recorded(self):
        with record_run('diagnose', self.config, inputs={'symbol': 'p.json'}) as recorder:
            recorder.set_verdict('GS_not_GH_consistent', 1)
            recorder.add_artifact('out/report.json')
        run = AnalysisRun.objects.get()
        self.assertEqual(run.status, AnalysisRun.Status.SUCCEEDED)
        self.assertEqual(run.verdict, 'GS_not_GH_consistent')
        self.assertEqual(run.exit_code, 1)
        self.assertEqual(run.seed, 7)
        self.assertEqual(run.config_hash, self.config.config_hash())
        self.assertEqual(run.inputs, {'symbol': 'p.json'})
        self.assertEqual(run.artifacts, ['out/report.json'])
        self.assertTrue(run.is_finished)

    def test_failure_is_recorded_and_reraised(self):
        with self.assertRaises(CommandError):
            with record_run('solve', self.config):
                raise CommandError('bad block', returncode=65)
        run = AnalysisRun.objects.get()
        self.assertEqual(run.status, AnalysisRun.Status.FAILED)
        self.assertEqual(run.exit_code, 65)
        self.assertEqual(run.message, 'bad block')

    def test_disabled(self):
        with record_run('info', self.config, enabled=False) as recorder:
            self.assertFalse(recorder.recording)
        self.assertFalse(AnalysisRun.objects.exists())

    @override_settings(SPECTRAL_RECORD_RUNS=False)
    def test_disabled_by_settings(self):
        with record_run('info', self.config):
            pass
        self.assertFalse(AnalysisRun.objects.exists())
