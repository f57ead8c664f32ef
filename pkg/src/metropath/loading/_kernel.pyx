# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled event loop.  Same contract as ``_pykernel.simulate``."""

import numpy as np
cimport numpy as cnp
from libcpp.vector cimport vector
from libcpp.queue cimport priority_queue

cnp.import_array()

ctypedef long long i64

cdef int SHIFT = 32
cdef i64 MASK = (<i64>1 << 32) - 1


def simulate(
    const i64[:] pass_arrival0,
    const i64[:] pass_probe,
    const i64[:] pass_leg_ptr,
    const i64[:] leg_board_platform,
    const i64[:] leg_alight_pos,
    const i64[:] leg_walk_after,
    const i64[:] stop_platform,
    const i64[:] stop_train,
    const i64[:] stop_base,
    const i64[:] stop_capacity,
    const i64[:] event_time,
    const i64[:] event_kind,
    const i64[:] event_stop,
    i64 n_platforms,
    i64 n_trains,
):
    cdef Py_ssize_t n_pass = pass_arrival0.shape[0]
    cdef Py_ssize_t n_leg = leg_board_platform.shape[0]
    cdef Py_ssize_t n_stop = stop_platform.shape[0]
    cdef Py_ssize_t n_event = event_time.shape[0]

    out_leg_arrive = np.full(n_leg, -1, dtype=np.int64)
    out_leg_board = np.full(n_leg, -1, dtype=np.int64)
    out_leg_alight = np.full(n_leg, -1, dtype=np.int64)
    out_leg_stop = np.full(n_leg, -1, dtype=np.int64)
    out_pass_exit = np.full(n_pass, -1, dtype=np.int64)
    out_dep_boarded = np.zeros(n_stop, dtype=np.int64)
    out_dep_denied = np.zeros(n_stop, dtype=np.int64)
    out_dep_load = np.zeros(n_stop, dtype=np.int64)
    cur_leg_arr = np.asarray(pass_leg_ptr[: n_pass], dtype=np.int64).copy()
    onboard_arr = np.zeros(n_trains, dtype=np.int64)

    cdef i64[:] leg_arrive = out_leg_arrive
    cdef i64[:] leg_board = out_leg_board
    cdef i64[:] leg_alight = out_leg_alight
    cdef i64[:] leg_stop = out_leg_stop
    cdef i64[:] pass_exit = out_pass_exit
    cdef i64[:] dep_boarded = out_dep_boarded
    cdef i64[:] dep_denied = out_dep_denied
    cdef i64[:] dep_load = out_dep_load
    cdef i64[:] cur_leg = cur_leg_arr
    cdef i64[:] onboard = onboard_arr

    cdef vector[priority_queue[i64]] pending = vector[priority_queue[i64]](2 * n_platforms)
    cdef vector[vector[i64]] present = vector[vector[i64]](2 * n_platforms)
    cdef vector[size_t] head = vector[size_t](2 * n_platforms, 0)
    cdef vector[vector[i64]] buckets = vector[vector[i64]](n_stop)

    cdef Py_ssize_t pid, e, k, q, qi
    cdef i64 ell, t, s, train, plat, base, limit, arr, room, boarded, key
    cdef size_t h

    for pid in range(n_pass):
        ell = cur_leg[pid]
        if ell == pass_leg_ptr[pid + 1]:
            continue
        t = pass_arrival0[pid]
        leg_arrive[ell] = t
        pending[2 * leg_board_platform[ell] + pass_probe[pid]].push(-((t << SHIFT) | pid))

    for e in range(n_event):
        t = event_time[e]
        s = event_stop[e]
        train = stop_train[s]
        if event_kind[e] == 0:
            for k in range(<Py_ssize_t>buckets[s].size()):
                pid = buckets[s][k]
                ell = cur_leg[pid]
                leg_alight[ell] = t
                if pass_probe[pid] == 0:
                    onboard[train] -= 1
                if ell + 1 == pass_leg_ptr[pid + 1]:
                    pass_exit[pid] = t + leg_walk_after[ell]
                else:
                    arr = t + leg_walk_after[ell]
                    ell += 1
                    cur_leg[pid] = ell
                    leg_arrive[ell] = arr
                    pending[2 * leg_board_platform[ell] + pass_probe[pid]].push(
                        -((arr << SHIFT) | pid)
                    )
            buckets[s].clear()
            continue

        plat = stop_platform[s]
        base = stop_base[s]
        limit = (t << SHIFT) | MASK
        for qi in range(2):
            q = 2 * plat + qi
            while not pending[q].empty() and -pending[q].top() <= limit:
                present[q].push_back((-pending[q].top()) & MASK)
                pending[q].pop()

        q = 2 * plat + 1
        while head[q] < present[q].size():
            pid = present[q][head[q]]
            head[q] += 1
            ell = cur_leg[pid]
            leg_board[ell] = t
            leg_stop[ell] = s
            buckets[base + leg_alight_pos[ell]].push_back(pid)

        q = 2 * plat
        room = stop_capacity[s] - onboard[train]
        boarded = 0
        while head[q] < present[q].size() and boarded < room:
            pid = present[q][head[q]]
            head[q] += 1
            ell = cur_leg[pid]
            leg_board[ell] = t
            leg_stop[ell] = s
            buckets[base + leg_alight_pos[ell]].push_back(pid)
            boarded += 1
        onboard[train] += boarded
        dep_boarded[s] = boarded
        dep_denied[s] = <i64>(present[q].size() - head[q])
        dep_load[s] = onboard[train]
        for qi in range(2):
            q = 2 * plat + qi
            if head[q] == present[q].size():
                present[q].clear()
                head[q] = 0

    return {
        "leg_arrive": out_leg_arrive,
        "leg_board": out_leg_board,
        "leg_alight": out_leg_alight,
        "leg_stop": out_leg_stop,
        "pass_exit": out_pass_exit,
        "dep_boarded": out_dep_boarded,
        "dep_denied": out_dep_denied,
        "dep_load": out_dep_load,
    }
