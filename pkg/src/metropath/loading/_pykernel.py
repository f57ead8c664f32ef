"""Pure-Python event loop; reference twin of ``_kernel.pyx``.

Both implementations take the flat arrays prepared by
:meth:`metropath.loading.sim.LoadingModel.run` and must return identical
results.  Queue keys pack ``(platform arrival time, passenger id)`` into one
integer; passenger ids are assigned in tap-in order, so key order is the
first-in-first-board order with the (tap-in, id) tie-break.
"""

import heapq
from collections import deque

import numpy as np

SHIFT = 32
MASK = (1 << SHIFT) - 1


def simulate(
    pass_arrival0,
    pass_probe,
    pass_leg_ptr,
    leg_board_platform,
    leg_alight_pos,
    leg_walk_after,
    stop_platform,
    stop_train,
    stop_base,
    stop_capacity,
    event_time,
    event_kind,
    event_stop,
    n_platforms,
    n_trains,
):
    n_pass = len(pass_arrival0)
    n_leg = len(leg_board_platform)
    n_stop = len(stop_platform)

    arrival0 = pass_arrival0.tolist()
    probe = pass_probe.tolist()
    leg_ptr = pass_leg_ptr.tolist()
    board_plat = leg_board_platform.tolist()
    alight_pos = leg_alight_pos.tolist()
    walk_after = leg_walk_after.tolist()
    s_plat = stop_platform.tolist()
    s_train = stop_train.tolist()
    s_base = stop_base.tolist()
    s_cap = stop_capacity.tolist()

    leg_arrive = [-1] * n_leg
    leg_board = [-1] * n_leg
    leg_alight = [-1] * n_leg
    leg_stop = [-1] * n_leg
    pass_exit = [-1] * n_pass
    dep_boarded = [0] * n_stop
    dep_denied = [0] * n_stop
    dep_load = [0] * n_stop

    cur_leg = leg_ptr[:-1]
    pending = [[] for _ in range(2 * n_platforms)]
    present = [deque() for _ in range(2 * n_platforms)]
    buckets = [[] for _ in range(n_stop)]
    onboard = [0] * n_trains

    for pid in range(n_pass):
        ell = cur_leg[pid]
        if ell == leg_ptr[pid + 1]:
            continue
        t = arrival0[pid]
        leg_arrive[ell] = t
        pending[2 * board_plat[ell] + probe[pid]].append((t << SHIFT) | pid)
    for h in pending:
        heapq.heapify(h)

    for t, kind, s in zip(event_time.tolist(), event_kind.tolist(), event_stop.tolist()):
        train = s_train[s]
        if kind == 0:
            bucket = buckets[s]
            for pid in bucket:
                ell = cur_leg[pid]
                leg_alight[ell] = t
                if not probe[pid]:
                    onboard[train] -= 1
                if ell + 1 == leg_ptr[pid + 1]:
                    pass_exit[pid] = t + walk_after[ell]
                else:
                    arr = t + walk_after[ell]
                    ell += 1
                    cur_leg[pid] = ell
                    leg_arrive[ell] = arr
                    heapq.heappush(
                        pending[2 * board_plat[ell] + probe[pid]], (arr << SHIFT) | pid
                    )
            buckets[s] = []
            continue

        plat = s_plat[s]
        base = s_base[s]
        limit = (t << SHIFT) | MASK
        for q in (2 * plat, 2 * plat + 1):
            heap, queue = pending[q], present[q]
            while heap and heap[0] <= limit:
                queue.append(heapq.heappop(heap) & MASK)

        queue = present[2 * plat + 1]
        while queue:
            pid = queue.popleft()
            ell = cur_leg[pid]
            leg_board[ell] = t
            leg_stop[ell] = s
            buckets[base + alight_pos[ell]].append(pid)

        queue = present[2 * plat]
        room = s_cap[s] - onboard[train]
        boarded = 0
        while queue and boarded < room:
            pid = queue.popleft()
            ell = cur_leg[pid]
            leg_board[ell] = t
            leg_stop[ell] = s
            buckets[base + alight_pos[ell]].append(pid)
            boarded += 1
        onboard[train] += boarded
        dep_boarded[s] = boarded
        dep_denied[s] = len(queue)
        dep_load[s] = onboard[train]

    as_arr = lambda x: np.array(x, dtype=np.int64)
    return {
        "leg_arrive": as_arr(leg_arrive),
        "leg_board": as_arr(leg_board),
        "leg_alight": as_arr(leg_alight),
        "leg_stop": as_arr(leg_stop),
        "pass_exit": as_arr(pass_exit),
        "dep_boarded": as_arr(dep_boarded),
        "dep_denied": as_arr(dep_denied),
        "dep_load": as_arr(dep_load),
    }
