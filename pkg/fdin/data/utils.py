import os
import json
import logging
import os.path as osp
from dataclasses import dataclass, field
from typing import List

import pandas as pd
from texttable import Texttable

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ['clip_id', 'frame_dir', 'mask_dir', 'frame_count', 'split']
SPLITS = ('train', 'val', 'test')


def makedirs(path: str):
    r"""Recursive directory creation; an existing directory is fine, anything else raises."""
    os.makedirs(osp.expanduser(osp.normpath(path)), exist_ok=True)


def args_print(args, title=("Parameter", "Value")):
    r"""
    Print a flat mapping as a two-column table.

    Parameters
    ----------
    args: dict
        Mapping of names to values; nested keys should already be dotted.
    """
    t = Texttable(max_width=120)
    t.add_row(list(title))
    for k in args:
        t.add_row([k, args[k]])
    print(t.draw())


def write_jsonl(file_path, records, mode='w'):
    r"""Write ``records`` as newline-delimited JSON."""
    with open(file_path, mode) as file:
        for record in records:
            file.write(json.dumps(record, sort_keys=True) + "\n")


def open_jsonl_file(file_path):
    with open(file_path, 'r') as file:
        return [json.loads(line) for line in file if line.strip()]


@dataclass
class ManifestRecord:
    clip_id: str
    frame_dir: str
    mask_dir: str
    frame_count: int
    split: str = 'train'


@dataclass
class DatasetManifest:
    r"""
    Clip index of a dataset.

    Paths are stored as given; :meth:`read` resolves relative paths against
    the manifest's own folder.
    """
    records: List[ManifestRecord] = field(default_factory=list)
    path: str = None

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def split(self, name):
        return DatasetManifest([r for r in self.records if r.split == name], self.path)

    def save(self, file_path):
        r"""
        Save as a headerless tab-separated file, one clip per line.

        Paths under the manifest's folder are written relative to it.
        """
        base = osp.dirname(osp.abspath(file_path))
        rows = []
        for r in self.records:
            rows.append([r.clip_id, _relative(r.frame_dir, base), _relative(r.mask_dir, base),
                         int(r.frame_count), r.split])
        pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(file_path, sep='\t', header=False, index=False)
        self.path = file_path
        return file_path

    @classmethod
    def read(cls, file_path, check=True):
        r"""
        Read a manifest written by :meth:`save`.

        Parameters
        ----------
        file_path: str
            Manifest path.
        check: bool, optional
            Verify that every frame has a mask and counts match.
            (default: :obj:`True`)
        """
        if not osp.isfile(file_path):
            raise FileNotFoundError(f"manifest not found: {file_path}")
        df = pd.read_csv(file_path, sep='\t', header=None, names=MANIFEST_COLUMNS,
                         dtype={'clip_id': str, 'frame_dir': str, 'mask_dir': str, 'split': str})
        base = osp.dirname(osp.abspath(file_path))
        records = []
        for row in df.itertuples(index=False):
            if row.split not in SPLITS:
                raise ValueError(f"{file_path}: clip {row.clip_id} has unknown split '{row.split}'")
            records.append(ManifestRecord(
                clip_id=row.clip_id,
                frame_dir=osp.normpath(osp.join(base, row.frame_dir)),
                mask_dir=osp.normpath(osp.join(base, row.mask_dir)),
                frame_count=int(row.frame_count),
                split=row.split,
            ))
        manifest = cls(records, file_path)
        if check:
            manifest.verify()
        return manifest

    def verify(self):
        from fdin.data.video import list_frame_files, list_mask_files
        for r in self.records:
            frames = list_frame_files(r.frame_dir)
            masks = list_mask_files(r.mask_dir)
            if len(frames) != r.frame_count:
                raise ValueError(
                    f"{r.frame_dir}: manifest says {r.frame_count} frames, found {len(frames)}")
            if len(masks) != len(frames):
                raise ValueError(f"{r.mask_dir}: {len(masks)} masks for {len(frames)} frames")


def _relative(path, base):
    path = osp.abspath(path)
    if path.startswith(base + os.sep):
        return osp.relpath(path, base)
    return path


def read_manifests(paths):
    r"""Concatenate several manifests, keeping record order."""
    records = []
    for p in paths:
        records.extend(DatasetManifest.read(p).records)
    return DatasetManifest(records, paths[0] if len(paths) == 1 else None)
