"""Compressed sorted integer sets with roaring-style containers.

Ids are split into a 16-bit high key and a 16-bit low part. Each high key
owns one container: a sorted ``uint16`` array while it holds at most
``ARRAY_LIMIT`` values, otherwise a 65536-bit bitmap stored as 1024
``uint64`` words.
"""
from __future__ import annotations

from typing import Iterable

import numpy as np

ARRAY_LIMIT = 4096
_WORDS = 1024


def _bits_to_array(words: np.ndarray) -> np.ndarray:
    bits = np.unpackbits(words.view(np.uint8), bitorder="little")
    return np.flatnonzero(bits).astype(np.uint16)


def _array_to_bits(values: np.ndarray) -> np.ndarray:
    bits = np.zeros(_WORDS * 64, dtype=np.uint8)
    bits[values.astype(np.int64)] = 1
    return np.packbits(bits, bitorder="little").view(np.uint64).copy()


def _popcount(words: np.ndarray) -> int:
    return int(np.unpackbits(words.view(np.uint8)).sum())


class RoaringBitmap:
    """Immutable compressed set of non-negative integers below 2**32."""

    __slots__ = ("_keys", "_containers", "_card")

    def __init__(self) -> None:
        self._keys: list[int] = []
        # each entry is (is_bitmap, payload)
        self._containers: list[tuple[bool, np.ndarray]] = []
        self._card = 0

    # construction -----------------------------------------------------
    @classmethod
    def from_sorted(cls, ids: np.ndarray) -> "RoaringBitmap":
        """Build from a sorted array of distinct ids."""
        bm = cls()
        n = len(ids)
        if n == 0:
            return bm
        ids = np.asarray(ids, dtype=np.int64)
        if ids[0] < 0 or ids[-1] >= 1 << 32:
            raise ValueError("ids must lie in [0, 2**32)")
        bm._card = n
        first_high = int(ids[0]) >> 16
        if int(ids[-1]) >> 16 == first_high:
            bm._keys.append(first_high)
            bm._containers.append(_make_container(ids & 0xFFFF))
            return bm
        highs = ids >> 16
        cuts = np.flatnonzero(np.diff(highs)) + 1
        starts = np.concatenate(([0], cuts))
        ends = np.concatenate((cuts, [n]))
        for s, e in zip(starts.tolist(), ends.tolist()):
            bm._keys.append(int(highs[s]))
            bm._containers.append(_make_container(ids[s:e] & 0xFFFF))
        return bm

    @classmethod
    def from_iterable(cls, ids: Iterable[int]) -> "RoaringBitmap":
        arr = np.unique(np.fromiter(ids, dtype=np.int64))
        return cls.from_sorted(arr)

    @classmethod
    def union_many(cls, bitmaps: list["RoaringBitmap"]) -> "RoaringBitmap":
        """Set union (OR) of several bitmaps."""
        if not bitmaps:
            return cls()
        if len(bitmaps) == 1:
            return bitmaps[0]
        by_key: dict[int, list[tuple[bool, np.ndarray]]] = {}
        for bm in bitmaps:
            for key, cont in zip(bm._keys, bm._containers):
                by_key.setdefault(key, []).append(cont)
        out = cls()
        for key in sorted(by_key):
            conts = by_key[key]
            if any(is_bits for is_bits, _ in conts):
                words = np.zeros(_WORDS, dtype=np.uint64)
                for is_bits, payload in conts:
                    if is_bits:
                        words |= payload
                    else:
                        words |= _array_to_bits(payload)
                card = _popcount(words)
                cont = (True, words) if card > ARRAY_LIMIT else (False, _bits_to_array(words))
            else:
                merged = np.unique(np.concatenate([p for _, p in conts]))
                cont = _make_container(merged)
                card = len(merged)
            out._keys.append(key)
            out._containers.append(cont)
            out._card += card
        return out

    def union(self, other: "RoaringBitmap") -> "RoaringBitmap":
        return RoaringBitmap.union_many([self, other])

    # queries -----------------------------------------------------------
    def __len__(self) -> int:
        return self._card

    def __contains__(self, x: int) -> bool:
        key, low = int(x) >> 16, int(x) & 0xFFFF
        try:
            i = self._keys.index(key)
        except ValueError:
            return False
        is_bits, payload = self._containers[i]
        if is_bits:
            return bool((int(payload[low >> 6]) >> (low & 63)) & 1)
        j = int(np.searchsorted(payload, low))
        return j < len(payload) and int(payload[j]) == low

    def to_array(self) -> np.ndarray:
        """Sorted ids as ``int64``."""
        if not self._keys:
            return np.empty(0, dtype=np.int64)
        parts = []
        for key, (is_bits, payload) in zip(self._keys, self._containers):
            lows = _bits_to_array(payload) if is_bits else payload
            parts.append(lows.astype(np.int64) + (key << 16))
        return parts[0] if len(parts) == 1 else np.concatenate(parts)

    def __iter__(self):
        return iter(self.to_array().tolist())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RoaringBitmap):
            return NotImplemented
        return self._card == other._card and np.array_equal(self.to_array(), other.to_array())

    def __repr__(self) -> str:
        return f"RoaringBitmap(card={self._card}, containers={len(self._keys)})"

    def container_kinds(self) -> list[str]:
        return ["bitmap" if b else "array" for b, _ in self._containers]

    # serialization -----------------------------------------------------
    def serialize(self) -> bytes:
        """Portable layout: a 4-byte container count, then per container a
        2-byte key, 2-byte cardinality-1 and 1-byte kind, then payloads."""
        head = [np.array([len(self._keys)], dtype="<u4").tobytes()]
        body = []
        for key, (is_bits, payload) in zip(self._keys, self._containers):
            card = _popcount(payload) if is_bits else len(payload)
            head.append(np.array([key, card - 1], dtype="<u2").tobytes())
            head.append(bytes([1 if is_bits else 0]))
            body.append(payload.astype("<u8" if is_bits else "<u2").tobytes())
        return b"".join(head + body)

    @classmethod
    def deserialize(cls, data: bytes) -> "RoaringBitmap":
        n = int(np.frombuffer(data[:4], dtype="<u4")[0])
        pos = 4
        meta = []
        for _ in range(n):
            key, card_m1 = np.frombuffer(data[pos:pos + 4], dtype="<u2").tolist()
            meta.append((key, card_m1 + 1, data[pos + 4] == 1))
            pos += 5
        out = cls()
        for key, card, is_bits in meta:
            if is_bits:
                payload = np.frombuffer(data[pos:pos + 8 * _WORDS], dtype="<u8").astype(np.uint64)
                pos += 8 * _WORDS
            else:
                payload = np.frombuffer(data[pos:pos + 2 * card], dtype="<u2").astype(np.uint16)
                pos += 2 * card
            out._keys.append(key)
            out._containers.append((is_bits, payload))
            out._card += card
        return out

    def serialized_size(self) -> int:
        size = 4
        for is_bits, payload in self._containers:
            size += 5 + (8 * _WORDS if is_bits else 2 * len(payload))
        return size


def _make_container(lows: np.ndarray) -> tuple[bool, np.ndarray]:
    lows = lows.astype(np.uint16)
    if len(lows) > ARRAY_LIMIT:
        return True, _array_to_bits(lows)
    return False, lows


def size_bound(z: int, u: int) -> int:
    """Byte bound for a serialized set of ``z`` ids drawn from ``[0, u)``."""
    return 2 * z + 9 * (u // 65535 + 1) + 8
