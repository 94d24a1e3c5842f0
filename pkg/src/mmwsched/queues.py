"""Per-UE FIFO packet queue stored as (arrival slot, count) batches."""
from collections import deque


class PacketQueue:
    __slots__ = ("_batches", "length")

    def __init__(self):
        self._batches = deque()
        self.length = 0

    def __len__(self):
        return self.length

    def push(self, arrival_slot: int, count: int) -> None:
        if count <= 0:
            return
        if self._batches and self._batches[-1][0] == arrival_slot:
            self._batches[-1][1] += count
        else:
            self._batches.append([arrival_slot, count])
        self.length += count

    def head(self, n: int):
        """Arrival slots of the first ``n`` packets as (slot, count) pairs, without removing them."""
        out = []
        for slot, cnt in self._batches:
            if n <= 0:
                break
            k = cnt if cnt < n else n
            out.append((slot, k))
            n -= k
        return out

    def pop(self, n: int):
        """Remove up to ``n`` packets from the head; returns (slot, count) pairs."""
        out = []
        batches = self._batches
        while n > 0 and batches:
            first = batches[0]
            if first[1] <= n:
                batches.popleft()
                out.append((first[0], first[1]))
                n -= first[1]
                self.length -= first[1]
            else:
                first[1] -= n
                out.append((first[0], n))
                self.length -= n
                n = 0
        return out

    def arrival_slots(self):
        return [(s, c) for s, c in self._batches]
