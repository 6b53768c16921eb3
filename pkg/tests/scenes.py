"""Synthetic scenes shared by the test modules."""

from cascadesearch.cbo import AccuracyTarget, SearchGrid, TimingProfile
from cascadesearch.frames import SynthSpec, VideoMeta

# 10k-frame clip whose label track is frozen in golden/labels_seed7.csv
SEED7 = SynthSpec(VideoMeta(32, 32, 1, 30, 10_000), appearance_rate=2.0, dwell_frames=150,
                  noise_sigma=2.0, seed=7)

# 50k-frame clip used by the acceptance criteria
GOLDEN = SynthSpec(VideoMeta(32, 32, 1, 30, 50_000), object_size=8, object_intensity=200,
                   appearance_rate=2.0, dwell_frames=300, noise_sigma=3.0, seed=11)

# small clip for fast end-to-end checks
SMALL = SynthSpec(VideoMeta(24, 24, 1, 30, 3_000), object_size=6, object_intensity=210,
                  appearance_rate=6.0, dwell_frames=90, noise_sigma=2.0, seed=3)

SPLIT = (0.3, 0.05, 0.3)  # the remaining 35% is a held-out test segment
TARGETS = AccuracyTarget(0.01, 0.01)

# fixed stage costs keep the search deterministic; full/specialized ratio is 100
TIMING = TimingProfile(t_mse=2e-5, t_full=1e-2, t_specialized={"default": 1e-4}, t_mse_blocked=4e-5)


def small_grid(**kw) -> SearchGrid:
    from cascadesearch.specialized import TrainHyper, arch_grid

    base = dict(t_skips=(1, 5), t_diffs=(1, 10), archs=arch_grid(12, 12, 1, widths=(8,), penultimate=(16,)),
                hyper=TrainHyper(max_epochs=3, seed=1), max_delta_candidates=None, block_lr_iterations=400)
    base.update(kw)
    return SearchGrid(**base)

# tiny clip whose whole search can be re-enumerated by brute force
TINY = SynthSpec(VideoMeta(16, 16, 1, 30, 400), object_size=5, object_intensity=210,
                 appearance_rate=60.0, dwell_frames=25, seed=5)

# dim, noisy objects: the specialized model alone cannot meet 1%/1%
DIM = SynthSpec(VideoMeta(32, 32, 1, 30, 12_000), object_size=8, object_intensity=72,
                appearance_rate=4.0, dwell_frames=150, noise_sigma=8.0, seed=11)

# two scenes for the transfer check: bright objects vs dim objects
SCENE_A = SynthSpec(VideoMeta(32, 32, 1, 30, 20_000), object_size=8, object_intensity=230,
                    appearance_rate=2.0, dwell_frames=300, noise_sigma=3.0, seed=21)
SCENE_B = SynthSpec(VideoMeta(32, 32, 1, 30, 20_000), object_size=8, object_intensity=85,
                    appearance_rate=2.0, dwell_frames=300, noise_sigma=3.0, seed=22)
