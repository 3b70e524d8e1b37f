from django.test import SimpleTestCase, override_settings

from .conf import DEFAULTS, get_setting
from .exceptions import (
    ConfigSchemaError, InvalidFieldError, Muskat3DError, RayleighTaylorViolation,
    SnapshotFormatError, SolverDivergenceError,
)


class SettingsTests(SimpleTestCase):

    @override_settings(MUSKAT3D={'WORKERS': 4})
    def test_project_values_override_defaults(self):
        self.assertEqual(get_setting('WORKERS'), 4)
        self.assertEqual(get_setting('DENSE_LIMIT'), DEFAULTS['DENSE_LIMIT'])

    def test_unknown_setting(self):
        with self.assertRaises(KeyError):
            get_setting('THREADS')


class ExceptionTests(SimpleTestCase):

    def test_stop_reasons(self):
        self.assertEqual(RayleighTaylorViolation('x', min_sigma=-1.0).stop_reason, 'rayleigh-taylor')
        self.assertEqual(SolverDivergenceError('x').stop_reason, 'omega-solve')
        self.assertEqual(ConfigSchemaError('x').stop_reason, 'config')

    def test_field_errors_are_value_errors(self):
        self.assertTrue(issubclass(InvalidFieldError, ValueError))
        self.assertTrue(issubclass(InvalidFieldError, Muskat3DError))

    def test_context_is_reported(self):
        error = SnapshotFormatError('truncated payload', offset=42)
        self.assertEqual(error.offset, 42)
        self.assertIn('byte offset 42', str(error))
        self.assertEqual(error.as_dict()['offset'], 42)
        self.assertEqual(ConfigSchemaError('bad', key='grid.n').as_dict()['key'], 'grid.n')
