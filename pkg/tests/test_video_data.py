import os
import os.path as osp

import numpy as np
import pytest
import torch
from PIL import Image
from scipy import ndimage

from fdin.data import (ClipWindow, DatasetManifest, ManifestRecord, MaskSequence, VideoClip, anchored_starts,
                       augment, load_clip, load_frames, load_masks, makedirs, psnr, recompress_qf, read_manifests,
                       save_frames, save_masks, sliding_windows, window_starts)
from fdin.data.video import augment_params


def write_clip(root, frames, masks):
    frame_dir, mask_dir = osp.join(root, 'frames'), osp.join(root, 'masks')
    os.makedirs(frame_dir)
    os.makedirs(mask_dir)
    for i, frame in enumerate(frames):
        Image.fromarray(frame).save(osp.join(frame_dir, f'{i:03d}.png'))
    for i, mask in enumerate(masks):
        Image.fromarray(mask).save(osp.join(mask_dir, f'{i:03d}.png'))
    return frame_dir, mask_dir


def make_clip(t=6, h=8, w=10):
    frames = torch.rand(t, 3, h, w)
    masks = (torch.rand(t, h, w) > 0.5).to(torch.uint8)
    return VideoClip(frames), MaskSequence(masks)


def smooth_frames(rng, t=3, h=32, w=48):
    noise = rng.random((t, h, w, 3))
    smooth = ndimage.gaussian_filter(noise, sigma=(0, 3, 3, 0))
    smooth = (smooth - smooth.min()) / (smooth.max() - smooth.min())
    return VideoClip(torch.from_numpy(smooth.astype(np.float32)).permute(0, 3, 1, 2).contiguous())


def test_load_clip(tmp_path, rng):
    frames = rng.integers(0, 256, size=(4, 6, 5, 3), dtype=np.uint8)
    masks = rng.choice(np.array([0, 100, 128, 255], dtype=np.uint8), size=(4, 6, 5))
    frame_dir, mask_dir = write_clip(str(tmp_path), frames, masks)

    clip, seq = load_clip(frame_dir, mask_dir)
    assert clip.frames.shape == (4, 3, 6, 5) and clip.hw == (6, 5)
    assert torch.allclose(clip.frames, torch.from_numpy(frames).permute(0, 3, 1, 2).float() / 255)
    assert torch.equal(seq.masks, torch.from_numpy((masks > 127).astype(np.uint8)))
    assert torch.equal(load_frames(frame_dir).frames, clip.frames)
    assert torch.equal(load_masks(mask_dir).masks, seq.masks)


def test_load_clip_count_mismatch(tmp_path, rng):
    frames = rng.integers(0, 256, size=(3, 4, 4, 3), dtype=np.uint8)
    masks = np.zeros((2, 4, 4), dtype=np.uint8)
    frame_dir, mask_dir = write_clip(str(tmp_path), frames, masks)
    with pytest.raises(ValueError, match='count mismatch'):
        load_clip(frame_dir, mask_dir)


def test_load_clip_undecodable(tmp_path, rng):
    frame_dir, mask_dir = write_clip(str(tmp_path), rng.integers(0, 256, size=(1, 4, 4, 3), dtype=np.uint8),
                                     np.zeros((1, 4, 4), dtype=np.uint8))
    with open(osp.join(frame_dir, '000.png'), 'wb') as f:
        f.write(b'not an image')
    with pytest.raises(ValueError, match='cannot decode'):
        load_clip(frame_dir, mask_dir)
    with pytest.raises(FileNotFoundError):
        load_clip(osp.join(str(tmp_path), 'missing'), mask_dir)


def test_saved_frames_and_masks_reload(tmp_path):
    clip, seq = make_clip()
    save_frames(clip.frames, str(tmp_path / 'f'))
    save_masks(seq.masks, str(tmp_path / 'm'))
    loaded, loaded_masks = load_clip(str(tmp_path / 'f'), str(tmp_path / 'm'))
    assert (loaded.frames - clip.frames).abs().max() <= 0.5 / 255 + 1e-6
    assert torch.equal(loaded_masks.masks, seq.masks)
    assert set(np.unique(np.asarray(Image.open(str(tmp_path / 'm' / 'mask_00000.png'))))) <= {0, 255}


def test_value_checks():
    with pytest.raises(ValueError):
        VideoClip(torch.full((2, 3, 4, 4), 1.5))
    with pytest.raises(ValueError):
        VideoClip(torch.rand(2, 1, 4, 4))
    with pytest.raises(ValueError, match='binary'):
        MaskSequence(torch.full((2, 4, 4), 2))


def test_window_counts_match_enumeration():
    for t in range(1, 13):
        for t_c in range(1, t + 1):
            for stride in range(1, 5):
                brute = [s for s in range(t) if s % stride == 0 and s + t_c <= t]
                assert window_starts(t, t_c, stride) == brute
                assert len(brute) == (t - t_c) // stride + 1


def test_stride_one_windows():
    starts = window_starts(10, 8, 1)
    assert starts == [0, 1, 2]
    coverage = np.zeros(10, dtype=int)
    for s in starts:
        coverage[s:s + 8] += 1
    assert coverage.tolist() == [1, 2, 3, 3, 3, 3, 3, 3, 2, 1]


def test_short_clip_rejected():
    with pytest.raises(ValueError, match='clip shorter than window'):
        window_starts(4, 8, 1)
    assert window_starts(8, 8, 3) == [0]


def test_anchored_starts_cover_every_frame():
    assert anchored_starts(10, 8) == [0, 2]
    assert anchored_starts(16, 8) == [0, 8]
    assert anchored_starts(10, 8, stride=4) == [0, 2]
    assert anchored_starts(8, 8) == [0]


def test_sliding_windows_carry_masks():
    clip, seq = make_clip(t=6)
    windows = sliding_windows(clip, seq, t_c=4, stride=1, clip_id='c0')
    assert [w.start_index for w in windows] == [0, 1, 2]
    for w in windows:
        assert isinstance(w, ClipWindow) and w.source_clip_id == 'c0'
        assert torch.equal(w.frames, clip.frames[w.start_index:w.start_index + 4])
        assert torch.equal(w.masks, seq.masks[w.start_index:w.start_index + 4])


def test_augment_is_shared_across_window():
    clip, seq = make_clip(t=4, h=8, w=10)
    window = sliding_windows(clip, seq, 4, 1)[0]

    flipped = augment(window, np.random.default_rng(0), (8, 10), flip_prob=1.0)
    assert torch.equal(flipped.frames, torch.flip(window.frames, dims=(-1,)))
    assert torch.equal(flipped.masks, torch.flip(window.masks, dims=(-1,)))
    twice = augment(flipped, np.random.default_rng(0), (8, 10), flip_prob=1.0)
    assert torch.equal(twice.frames, window.frames)

    top, left, flip = augment_params(np.random.default_rng(1), (8, 10), (5, 6), flip_prob=0.0)
    cropped = augment(window, np.random.default_rng(1), (5, 6), flip_prob=0.0)
    assert not flip
    assert torch.equal(cropped.frames, window.frames[..., top:top + 5, left:left + 6])
    assert torch.equal(cropped.masks, window.masks[..., top:top + 5, left:left + 6])

    with pytest.raises(ValueError, match='larger than frame'):
        augment(window, np.random.default_rng(0), (9, 10), flip_prob=0.0)


def test_recompress_qf(rng):
    clip = smooth_frames(rng)
    q100 = recompress_qf(clip, 100)
    q90 = recompress_qf(clip, 90)
    q70 = recompress_qf(clip, 70)
    assert q90.frames.shape == clip.frames.shape
    assert 0 <= q70.frames.min() and q70.frames.max() <= 1
    assert psnr(clip.frames, q100.frames) > 40
    assert psnr(clip.frames, q90.frames) >= psnr(clip.frames, q70.frames)
    with pytest.raises(ValueError, match='quality factor'):
        recompress_qf(clip, 0)


def test_psnr_known_values():
    reference = torch.full((2, 3, 4, 4), 0.5)
    # uniform error of 0.1 gives an MSE of 1e-2, i.e. 20 dB at peak 1
    assert psnr(reference, reference + 0.1) == pytest.approx(20.0, abs=1e-4)
    assert psnr(reference, reference + 0.1, peak=10.0) == pytest.approx(40.0, abs=1e-4)
    assert psnr(reference, reference.clone()) == float('inf')
    with pytest.raises(ValueError, match='equal shapes'):
        psnr(reference, reference[:1])


def test_makedirs(tmp_path):
    nested = tmp_path / 'a' / 'b' / 'c'
    makedirs(str(nested))
    assert nested.is_dir()
    makedirs(str(nested))

    occupied = tmp_path / 'file'
    occupied.write_text('x')
    with pytest.raises(FileExistsError):
        makedirs(str(occupied))
    with pytest.raises(OSError):
        makedirs(str(occupied / 'below'))


def test_manifest_round_trip(tmp_path):
    clip, seq = make_clip(t=3)
    save_frames(clip.frames, str(tmp_path / 'c0' / 'frames'))
    save_masks(seq.masks, str(tmp_path / 'c0' / 'masks'))
    manifest = DatasetManifest([ManifestRecord('c0', str(tmp_path / 'c0' / 'frames'),
                                               str(tmp_path / 'c0' / 'masks'), 3, 'val')])
    path = manifest.save(str(tmp_path / 'manifest.tsv'))
    with open(path) as f:
        assert f.read().split('\t')[1] == osp.join('c0', 'frames')

    loaded = read_manifests([path])
    assert len(loaded) == 1
    record = loaded.records[0]
    assert record.frame_dir == str(tmp_path / 'c0' / 'frames')
    assert record.frame_count == 3 and record.split == 'val'
    assert len(loaded.split('train')) == 0


def test_manifest_count_mismatch_detected(tmp_path):
    clip, seq = make_clip(t=3)
    save_frames(clip.frames, str(tmp_path / 'frames'))
    save_masks(seq.masks, str(tmp_path / 'masks'))
    path = DatasetManifest([ManifestRecord('c0', str(tmp_path / 'frames'), str(tmp_path / 'masks'), 5)]).save(
        str(tmp_path / 'manifest.tsv'))
    with pytest.raises(ValueError, match='manifest says 5 frames'):
        DatasetManifest.read(path)
