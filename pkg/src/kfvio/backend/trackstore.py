"""Two-stage feature-track memory.

Stage 1 is a sparse table with one row per live track and one column per age
slot; each entry holds a pointer into stage 2 (or -1). Stage 2 is a dense pool
of observation payloads (keyframe id plus three coordinates) managed with a
free list. Only stage-2 slots cost payload storage, which is the point of the
split: most stage-1 entries are empty at any time.
"""

from __future__ import annotations

import numpy as np

from ..errors import CapacityError, InvalidArgument, NotFoundError, TrackAgeError

POINTER_BITS = 12
KF_ID_BITS = 5
COORD_BITS = 64
EMPTY = -1


class TrackStore:
    def __init__(self, max_tracks=4000, age_slots=10, dense_capacity=4000):
        if dense_capacity > (1 << POINTER_BITS):
            raise InvalidArgument(f"dense capacity {dense_capacity} exceeds {POINTER_BITS}-bit pointers")
        if min(max_tracks, age_slots, dense_capacity) < 1:
            raise InvalidArgument("track store dimensions must be positive")
        self.max_tracks = max_tracks
        self.age_slots = age_slots
        self.dense_capacity = dense_capacity
        self.pointers = np.full((max_tracks, age_slots), EMPTY, dtype=np.int32)
        self.payload = np.zeros((dense_capacity, 3))
        self.payload_kf = np.full(dense_capacity, EMPTY, dtype=np.int64)
        # LIFO so the most recently freed slot is reused first
        self._free = list(range(dense_capacity - 1, -1, -1))
        self._free_rows = list(range(max_tracks - 1, -1, -1))
        self._rows = {}  # landmark id -> stage-1 row
        self._lengths = np.zeros(max_tracks, dtype=np.int32)

    def __contains__(self, landmark_id):
        return landmark_id in self._rows

    def __len__(self):
        return len(self._rows)

    @property
    def occupancy(self):
        return self.dense_capacity - len(self._free)

    @property
    def landmarks(self):
        return list(self._rows)

    def register(self, landmark_id):
        if landmark_id in self._rows:
            return self._rows[landmark_id]
        if not self._free_rows:
            raise CapacityError(f"track table full ({self.max_tracks} tracks)")
        row = self._free_rows.pop()
        self._rows[landmark_id] = row
        return row

    def insert(self, landmark_id, kf_id, observation):
        """Append one observation; returns the stage-2 pointer."""
        row = self._row(landmark_id)
        n = self._lengths[row]
        if n >= self.age_slots:
            raise TrackAgeError(f"track {landmark_id} already has {n} observations")
        if n and self.payload_kf[self.pointers[row, n - 1]] >= kf_id:
            raise InvalidArgument("observations must be inserted in increasing keyframe order")
        if not self._free:
            raise CapacityError(f"dense observation store full ({self.dense_capacity})")
        ptr = self._free.pop()
        self.payload[ptr] = observation
        self.payload_kf[ptr] = kf_id
        self.pointers[row, n] = ptr
        self._lengths[row] = n + 1
        return ptr

    def evict(self, landmark_id):
        """Drop a whole track; returns how many payload slots were freed."""
        row = self._row(landmark_id)
        n = int(self._lengths[row])
        for ptr in self.pointers[row, :n][::-1]:
            self.payload_kf[ptr] = EMPTY
            self._free.append(int(ptr))
        self.pointers[row] = EMPTY
        self._lengths[row] = 0
        del self._rows[landmark_id]
        self._free_rows.append(row)
        return n

    def observations(self, landmark_id):
        """``(kf_ids, coords)`` for one track, oldest first."""
        row = self._row(landmark_id)
        ptrs = self.pointers[row, : self._lengths[row]]
        return self.payload_kf[ptrs].copy(), self.payload[ptrs].copy()

    def track_length(self, landmark_id):
        return int(self._lengths[self._row(landmark_id)])

    def tracks_observed_at(self, kf_id):
        return [lid for lid, row in self._rows.items()
                if np.any(self.payload_kf[self.pointers[row, : self._lengths[row]]] == kf_id)]

    def check_invariants(self):
        live = self.pointers[self.pointers != EMPTY]
        assert len(live) == self.occupancy
        assert len(np.unique(live)) == len(live)
        assert np.all(live < self.dense_capacity)
        free = np.array(self._free, dtype=np.int64)
        assert len(np.intersect1d(free, live)) == 0
        assert len(free) + len(live) == self.dense_capacity
        assert np.all(self.payload_kf[live] != EMPTY)

    def _row(self, landmark_id):
        try:
            return self._rows[landmark_id]
        except KeyError:
            raise NotFoundError(f"unknown landmark {landmark_id}") from None


def flat_table_bits(entries=40_000):
    """Worst-case single table: every logical slot carries a full payload."""
    return entries * (KF_ID_BITS + 3 * COORD_BITS)


def two_stage_bits(entries=40_000, dense=4000, layout="packed"):
    """Stage-1 pointers plus stage-2 payloads.

    ``layout="packed"`` keeps the 5-bit KF id beside each 12-bit pointer in stage 1
    and stores only coordinates in stage 2. ``layout="field-widths"`` is the
    alternative accounting with bare pointers in stage 1 and the KF id moved
    into the payload.
    """
    if layout == "packed":
        return entries * (POINTER_BITS + KF_ID_BITS) + dense * 3 * COORD_BITS
    if layout == "field-widths":
        return entries * POINTER_BITS + dense * (KF_ID_BITS + 3 * COORD_BITS)
    raise InvalidArgument(f"unknown layout {layout!r}")
