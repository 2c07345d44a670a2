__all__ = ['RunConfig', 'DEFAULTS_PATH', 'ALIASES']

import io
import os
import shutil
import tempfile
import unittest

import yaml

from .utils import AttrDict

DEFAULTS_PATH = os.path.join(os.path.abspath(os.path.dirname(__file__)), 'defaults.yaml')

ALIASES = {'loss.beta': 'dfs.beta'}


def _format_value(value):
    text = yaml.safe_dump(value, default_flow_style=True)
    if text.endswith('\n...\n'):
        text = text[:-5]
    return text.strip()


class RunConfig(AttrDict):
    """
    Sectioned run configuration: config.train.lr, or dotted keys through
    get/set ('train.lr').  Layers are applied as shipped defaults < preset
    < key=value file < command-line overrides.  Every key must exist in
    defaults.yaml; values given as text are typed by yaml and coerced to
    the type of the default.
    """
    @classmethod
    def defaults(cls, preset=None):
        with io.open(DEFAULTS_PATH, 'r', encoding='utf-8') as f:
            raw = yaml.safe_load(f)
        presets = raw.pop('presets', {}) or {}
        out = cls(raw)
        dict.__setitem__(out, '_presets', presets)
        if preset is not None:
            out.apply_preset(preset)
        return out

    @classmethod
    def from_sources(cls, path=None, overrides=(), preset=None):
        out = cls.defaults(preset=preset)
        if path is not None:
            out.update_from_file(path)
        for item in overrides:
            out.set_item(item)
        return out

    def _split(self, key):
        key = ALIASES.get(key, key)
        parts = key.split('.')
        if len(parts) != 2 or parts[0] not in self or parts[0].startswith('_') or parts[1] not in self[parts[0]]:
            raise KeyError('unknown config key %s' % key)
        return parts

    def get(self, key, default=None):
        if '.' not in key:
            return dict.get(self, key, default)
        section, name = self._split(key)
        return self[section][name]

    def set(self, key, value):
        section, name = self._split(key)
        current = self[section][name]
        if isinstance(value, str) and not isinstance(current, str):
            value = yaml.safe_load(value)
        self[section][name] = self._coerce(key, current, value)

    def set_item(self, item):
        """Apply one 'key=value' string"""
        if '=' not in item:
            raise ValueError('expected key=value, got %r' % item)
        key, value = item.split('=', 1)
        self.set(key.strip(), value.strip())

    @staticmethod
    def _coerce(key, current, value):
        try:
            if isinstance(current, bool):
                if not isinstance(value, bool):
                    raise ValueError
                return value
            if isinstance(current, int):
                if isinstance(value, bool) or float(value) != int(float(value)):
                    raise ValueError
                return int(float(value))
            if isinstance(current, float):
                if isinstance(value, bool):
                    raise ValueError
                return float(value)
            if isinstance(current, list):
                if not isinstance(value, list):
                    value = [value]
                return [type(current[0])(v) for v in value] if current else list(value)
            return str(value)
        except (TypeError, ValueError):
            raise ValueError('%s: cannot use %r where a %s is expected' % (key, value, type(current).__name__))

    def apply_preset(self, name):
        presets = dict.get(self, '_presets', {})
        if name not in presets:
            raise KeyError('unknown preset %s; expected one of %s' % (name, '|'.join(sorted(presets))))
        for key, value in presets[name].items():
            self.set(key, value)

    def update_from_file(self, path):
        with io.open(path, 'r', encoding='utf-8') as f:
            self.update_from_lines(f, path)

    def update_from_lines(self, lines, name='<config>'):
        """Apply key=value lines; # starts a comment"""
        for lineno, line in enumerate(lines, 1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ValueError('%s:%d: expected key=value, got %r' % (name, lineno, line))
            try:
                self.set_item(line)
            except KeyError as e:
                raise KeyError('%s:%d: %s' % (name, lineno, e.args[0]))

    @classmethod
    def loads(cls, text, name='<config>'):
        """Config echoed by dumps, layered on the shipped defaults"""
        out = cls.defaults()
        out.update_from_lines(text.splitlines(), name)
        return out

    def flat(self):
        """Sorted (dotted key, value) pairs"""
        return sorted(('%s.%s' % (s, k), v) for s, section in self.items() if not s.startswith('_')
                      for k, v in section.items())

    def dumps(self):
        return ''.join('%s=%s\n' % (k, _format_value(v)) for k, v in self.flat())

    def write(self, path):
        with io.open(path, 'w', encoding='utf-8') as f:
            f.write(self.dumps())


class RunConfigTestCase(unittest.TestCase):
    def setUp(self):
        self.config = RunConfig.defaults()
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def testDefaults(self):
        self.assertEqual(self.config.data.frames, 20)
        self.assertEqual(self.config.get('dfs.keep_ratio'), 0.5)
        self.assertEqual(self.config.backbone.widths, [64, 128])

    def testTyping(self):
        self.config.set_item('train.eps=1e-8')
        self.assertEqual(self.config.train.eps, 1e-8)
        self.config.set_item('train.epochs=3')
        self.assertIsInstance(self.config.train.epochs, int)
        self.config.set_item('backbone.widths=[8, 9]')
        self.assertEqual(self.config.backbone.widths, [8, 9])
        self.config.set_item('model.use_flow=false')
        self.assertIs(self.config.model.use_flow, False)
        self.assertRaises(ValueError, self.config.set_item, 'train.epochs=2.5')
        self.assertRaises(ValueError, self.config.set_item, 'model.use_flow=3')

    def testUnknownKey(self):
        self.assertRaises(KeyError, self.config.set_item, 'train.momentum=0.9')
        self.assertRaises(KeyError, self.config.set_item, 'presets.desk=1')

    def testAlias(self):
        self.config.set_item('loss.beta=2')
        self.assertEqual(self.config.dfs.beta, 2.)

    def testLayering(self):
        path = os.path.join(self.tmp, 'run.cfg')
        with io.open(path, 'w') as f:
            f.write('# comment\ntrain.lr=0.01\ntrain.epochs = 7\n\n')
        config = RunConfig.from_sources(path, ['train.epochs=9'], preset='desk')
        self.assertEqual(config.train.lr, 0.01)
        self.assertEqual(config.train.epochs, 9)
        self.assertEqual(config.backbone.dim, 32)

    def testBadFileLine(self):
        path = os.path.join(self.tmp, 'run.cfg')
        with io.open(path, 'w') as f:
            f.write('train.lr=0.01\nnonsense\n')
        self.assertRaisesRegex(ValueError, 'run.cfg:2', self.config.update_from_file, path)

    def testEchoRoundTrip(self):
        self.config.apply_preset('desk')
        self.config.set_item('dfs.strategy=random')
        path = os.path.join(self.tmp, 'config.txt')
        self.config.write(path)
        back = RunConfig.from_sources(path)
        self.assertEqual(back.flat(), self.config.flat())
        self.assertEqual(RunConfig.loads(self.config.dumps()).flat(), self.config.flat())

    def testUnknownPreset(self):
        self.assertRaises(KeyError, self.config.apply_preset, 'cluster')

if __name__ == '__main__':
    unittest.main()
