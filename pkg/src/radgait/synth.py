__all__ = ['SubjectProfile', 'generate_subject', 'generate_stream', 'inject_noise_frames',
           'synth_streams', 'synth_dataset', 'write_synth', 'CLUTTER_BOX']

import os
import shutil
import tempfile
import unittest
from collections import namedtuple, OrderedDict

import numpy as np
from joblib import Parallel, delayed

from .core.PointStream import PointStream, RadarFrame, save_streams, window_stream
from .utils import derive_seed

# x, y, z, v ranges of clutter points
CLUTTER_BOX = ((-3., 3.), (0., 8.), (0., 2.), (-2., 2.))

# torso, left arm, right arm, left leg, right leg
_CENTER_WEIGHTS = np.array([.4, .15, .15, .15, .15])
_MIN_POINTS, _MAX_POINTS = 16, 40


class SubjectProfile(namedtuple('SubjectProfile', 'stride_freq speed arm_amp leg_amp arm_phase leg_phase '
                                                  'height doppler_sigma position_sigma')):
    """
    stride_freq - Hz
    speed - torso speed away from the sensor, m/s
    arm_amp, leg_amp - fore/aft swing amplitudes, m
    arm_phase, leg_phase - swing phase offsets, rad
    height - m
    doppler_sigma, position_sigma - per-point noise, m/s and m
    """
    __slots__ = ()


def generate_subject(class_id, seed):
    """
    Profile of synthetic subject class_id.  Speed and leg swing grow by
    25% per class (with 1% jitter), so any two classes differ by at
    least 20% in both.
    """
    if class_id < 0:
        raise ValueError('generate_subject: class_id must be >= 0, got %d' % class_id)
    rng = np.random.default_rng(derive_seed(seed, class_id))
    jitter = lambda: 1. + rng.uniform(-0.01, 0.01)
    growth = 1.25 ** class_id
    return SubjectProfile(stride_freq=(0.8 + 0.1 * (class_id % 5)) * jitter(),
                          speed=0.3 * growth * jitter(),
                          arm_amp=0.1 * 1.1 ** (class_id % 3) * jitter(),
                          leg_amp=0.08 * growth * jitter(),
                          arm_phase=rng.uniform(0, 2 * np.pi),
                          leg_phase=rng.uniform(0, 2 * np.pi),
                          height=1.6 + 0.04 * (class_id % 6),
                          doppler_sigma=0.05,
                          position_sigma=0.03)


def _centers(profile, t, start):
    """Positions (5, 3) and velocities (5, 3) of the scatter centers at time t"""
    x0, y0 = start
    phase = 2 * np.pi * profile.stride_freq * t
    omega = 2 * np.pi * profile.stride_freq
    h = profile.height
    pos = np.empty((5, 3))
    vel = np.zeros((5, 3))
    pos[0] = x0, y0 + profile.speed * t, 0.55 * h
    vel[:, 1] = profile.speed
    limbs = [(1, -0.2, 0.75, profile.arm_amp, profile.arm_phase),
             (2, 0.2, 0.75, profile.arm_amp, profile.arm_phase + np.pi),
             (3, -0.1, 0.25, profile.leg_amp, profile.leg_phase),
             (4, 0.1, 0.25, profile.leg_amp, profile.leg_phase + np.pi)]
    for i, dx, zfrac, amp, offset in limbs:
        pos[i] = pos[0, 0] + dx, pos[0, 1] + amp * np.sin(phase + offset), zfrac * h
        vel[i, 1] += amp * omega * np.cos(phase + offset)
    return pos, vel


def generate_stream(profile, frames, fps, seed, subject=None, track_id=0, source=None):
    """
    frames radar frames of one walker at fps.  Each frame scatters 16-40
    points around the five centers; Doppler is each center's velocity
    projected on the line of sight to the torso, plus noise.
    """
    if frames < 1 or fps <= 0:
        raise ValueError('generate_stream: need frames >= 1 and fps > 0, got %d and %r' % (frames, fps))
    rng = np.random.default_rng(seed)
    start = (rng.uniform(-0.5, 0.5), rng.uniform(1.5, 2.5))
    out = []
    for i in range(frames):
        pos, vel = _centers(profile, i / float(fps), start)
        los = pos[0] / np.linalg.norm(pos[0])
        radial = vel.dot(los)
        n = rng.integers(_MIN_POINTS, _MAX_POINTS + 1)
        which = rng.choice(5, size=n, p=_CENTER_WEIGHTS)
        xyz = pos[which] + rng.normal(0., profile.position_sigma, size=(n, 3))
        v = radial[which] + rng.normal(0., profile.doppler_sigma, size=n)
        out.append(RadarFrame.from_array(i, np.column_stack([xyz, v])))
    return PointStream(out, subject=subject, track_id=track_id, source=source)


def _clutter(rng, index):
    n = rng.integers(_MIN_POINTS, _MAX_POINTS + 1)
    rows = np.column_stack([rng.uniform(lo, hi, size=n) for lo, hi in CLUTTER_BOX])
    return RadarFrame.from_array(index, rows)


def inject_noise_frames(stream, fraction, seed):
    """
    Replace floor(fraction * len(stream)) frames, chosen by seed, with
    uniform clutter; frame indices are preserved.
    """
    if not 0 <= fraction < 1:
        raise ValueError('inject_noise_frames: fraction must lie in [0, 1), got %r' % fraction)
    count = int(np.floor(fraction * len(stream) + 1e-9))
    if count == 0:
        return stream.derive(stream.frames)
    rng = np.random.default_rng(seed)
    chosen = set(rng.choice(len(stream), size=count, replace=False).tolist())
    frames = [_clutter(rng, f.index) if i in chosen else f for i, f in enumerate(stream.frames)]
    return stream.derive(frames)


def _recording(class_id, rec, nwindows, frames, fps, noise_fraction, seed):
    name = 'c%02d' % class_id
    stream = generate_stream(generate_subject(class_id, seed), nwindows * frames, fps,
                             derive_seed(seed, class_id, rec, 0), subject=name,
                             source='%s_rec%d.csv' % (name, rec))
    if noise_fraction > 0:
        blocks = [inject_noise_frames(w, noise_fraction, derive_seed(seed, class_id, rec, wi + 1))
                  for wi, w in enumerate(window_stream(stream, frames))]
        stream = stream.derive([f for b in blocks for f in b.frames])
    return stream


def synth_streams(classes=5, per_class=20, recordings=4, frames=20, noise_fraction=0., fps=10., seed=7,
                  threads=1):
    """
    per_class windows of frames frames for each class, spread over
    recordings recordings; noise is injected per window.
    """
    if classes < 1 or per_class < 1 or recordings < 1:
        raise ValueError('synth_streams: classes, per_class and recordings must be >= 1')
    jobs = []
    for c in range(classes):
        for rec in range(recordings):
            nwindows = per_class // recordings + (rec < per_class % recordings)
            if nwindows:
                jobs.append((c, rec, nwindows))
    return Parallel(n_jobs=threads, prefer='threads')(
        delayed(_recording)(c, rec, nw, frames, fps, noise_fraction, seed) for c, rec, nw in jobs)


def _from_config(config, threads=None):
    synth, data = config['synth'], config['data']
    return synth_streams(int(synth['classes']), int(synth['per_class']), int(synth['recordings']),
                         int(data['frames']), float(synth['noise_fraction']), float(synth['fps']),
                         int(synth['seed']), int(config['train']['threads'] if threads is None else threads))


def synth_dataset(config, threads=None, verbose=0):
    """GaitDataset of the synthetic streams the config's synth section describes"""
    from .preprocess.ingest import build_dataset
    data = config['data']
    return build_dataset(_from_config(config, threads), int(data['frames']), int(data['points']),
                         seed=int(config['synth']['seed']), center=bool(data['center']), verbose=verbose)


def write_synth(config, directory, threads=None, verbose=0):
    """
    Write one tracked stream file per recording and a manifest.csv into
    directory, ready for ingest.  Returns the manifest entries.
    """
    from .preprocess.ingest import ManifestEntry, write_manifest
    if not os.path.isdir(directory):
        os.makedirs(directory)
    manifest = OrderedDict()
    for stream in _from_config(config, threads):
        save_streams([stream], os.path.join(directory, stream.source))
        manifest[stream.source] = ManifestEntry(stream.subject, 'synthetic')
    write_manifest(manifest, os.path.join(directory, 'manifest.csv'))
    if verbose:
        print('write_synth: %d recordings in %s' % (len(manifest), directory))
    return manifest


def _window_features(window):
    """Mean Doppler and the dominant frequency of the per-frame Doppler spread"""
    v = [f.as_array()[:, 3] for f in window.frames]
    spread = np.array([x.std() for x in v])
    spectrum = np.abs(np.fft.rfft(spread - spread.mean()))
    return [np.concatenate(v).mean(), float(np.argmax(spectrum[1:]) + 1) / len(spread), spread.mean()]


class SynthTestCase(unittest.TestCase):
    def testProfileDeterministic(self):
        self.assertEqual(generate_subject(3, 1), generate_subject(3, 1))

    def testProfilesSeparated(self):
        profiles = [generate_subject(c, 0) for c in range(10)]
        self.assertEqual(len(set(profiles)), 10)
        for a in range(10):
            for b in range(a + 1, 10):
                pa, pb = profiles[a], profiles[b]
                far = [f for f in SubjectProfile._fields
                       if max(getattr(pa, f), getattr(pb, f)) >= 1.2 * min(getattr(pa, f), getattr(pb, f))]
                self.assertGreaterEqual(len(far), 2, (a, b))

    def testPointCounts(self):
        stream = generate_stream(generate_subject(2, 0), 60, 10., 3)
        counts = stream.point_counts()
        self.assertGreaterEqual(min(counts), 16)
        self.assertLessEqual(max(counts), 40)
        self.assertEqual([f.index for f in stream], list(range(60)))

    def testRigidBody(self):
        profile = generate_subject(1, 0)._replace(arm_amp=0., leg_amp=0., doppler_sigma=0., position_sigma=0.)
        stream = generate_stream(profile, 5, 10., 0)
        for frame in stream:
            v = frame.as_array()[:, 3]
            np.testing.assert_allclose(v, v[0], rtol=0, atol=1e-12)

    def testMeanDoppler(self):
        profile = generate_subject(0, 0)._replace(stride_freq=1.)
        stream = generate_stream(profile, 50, 10., 4)
        v = np.concatenate([f.as_array()[:, 3] for f in stream])
        rng = np.random.default_rng(4)
        start = (rng.uniform(-0.5, 0.5), rng.uniform(1.5, 2.5))
        torso = []
        for i, frame in enumerate(stream):
            pos, vel = _centers(profile, i / 10., start)
            torso.extend([vel[0].dot(pos[0] / np.linalg.norm(pos[0]))] * len(frame))
        self.assertLess(abs(v.mean() - np.mean(torso)), 3 * v.std() / np.sqrt(len(v)))

    def testBitwiseReproducible(self):
        a = synth_streams(2, 3, 2, frames=5, noise_fraction=0.4, seed=1)
        b = synth_streams(2, 3, 2, frames=5, noise_fraction=0.4, seed=1, threads=2)
        self.assertEqual(a, b)

    def testNoiseFrames(self):
        stream = generate_stream(generate_subject(0, 0), 20, 10., 0)
        self.assertEqual(inject_noise_frames(stream, 0., 1), stream)
        noisy = inject_noise_frames(stream, 0.4, 1)
        self.assertEqual(len(noisy), 20)
        self.assertEqual(sum(a != b for a, b in zip(stream.frames, noisy.frames)), 8)
        self.assertEqual([f.index for f in noisy], [f.index for f in stream])
        self.assertRaises(ValueError, inject_noise_frames, stream, 1., 0)

    def testCountsPerClass(self):
        streams = synth_streams(3, 7, 3, frames=4)
        for c in range(3):
            mine = [s for s in streams if s.subject == 'c%02d' % c]
            self.assertEqual(sum(len(s) for s in mine), 7 * 4)
            self.assertEqual(len(mine), 3)

    def testIngestPath(self):
        from .config import RunConfig
        from .preprocess.ingest import ingest_directory, build_dataset
        config = RunConfig.defaults()
        config.set('synth.classes', 2)
        config.set('synth.per_class', 4)
        config.set('synth.recordings', 2)
        config.set('data.frames', 5)
        tmp = tempfile.mkdtemp()
        try:
            manifest = write_synth(config, tmp)
            self.assertEqual(len(manifest), 4)
            streams = ingest_directory(tmp, os.path.join(tmp, 'manifest.csv'))
            data = build_dataset(streams, 5, 16, seed=config.synth.seed)
            direct = synth_dataset(config)
            np.testing.assert_array_equal(data.labels, direct.labels)
            np.testing.assert_allclose(data.cloud, direct.cloud)
        finally:
            shutil.rmtree(tmp)


class LearnabilityTestCase(unittest.TestCase):
    def _fit(self, streams, frames=20):
        from sklearn.linear_model import LogisticRegression
        from sklearn.pipeline import make_pipeline
        from sklearn.preprocessing import StandardScaler
        X, y = [], []
        for s in streams:
            for w in window_stream(s, frames):
                X.append(_window_features(w))
                y.append(int(s.subject[1:]))
        X, y = np.array(X), np.array(y)
        test = np.arange(len(y)) % 2 == 1
        model = make_pipeline(StandardScaler(), LogisticRegression(max_iter=2000))
        model.fit(X[~test], y[~test])
        return model.score(X[test], y[test])

    def testLinearlySeparable(self):
        self.assertGreaterEqual(self._fit(synth_streams(5, 20, 4)), 0.9)

    def testClutterCarriesNoSignal(self):
        rng = np.random.default_rng(0)
        streams = [PointStream([_clutter(rng, i) for i in range(20 * 20)], subject='c%02d' % c)
                   for c in range(5)]
        self.assertLess(self._fit(streams), 0.45)

if __name__ == '__main__':
    unittest.main()
