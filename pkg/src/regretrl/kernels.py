"""Hot loops: episode rollouts, tabular learning sweeps, batched perturbed DP.

Each kernel is written once as plain Python over numpy arrays and compiled
with numba unless ``REGRETRL_DISABLE_NUMBA`` is set.  Random numbers are
always drawn outside the kernels (numpy ``Generator``) and passed in, so the
compiled and interpreted paths produce identical results.
"""
import numpy as np

from ._accel import NUMBA_ENABLED, jit


@jit
def sample_index(cum_row, u):
    n = cum_row.shape[0]
    for j in range(n):
        if u < cum_row[j]:
            return j
    return n - 1


@jit
def uniform_index(u, n):
    i = int(u * n)
    return n - 1 if i >= n else i


@jit
def greedy_max(row, n, tol):
    best = row[0]
    for a in range(1, n):
        if row[a] > best:
            best = row[a]
    for a in range(n):
        if row[a] >= best - tol:
            return a
    return 0


@jit
def greedy_regret(r_row, q_row, tol):
    n = r_row.shape[0]
    rmin = r_row[0]
    for a in range(1, n):
        if r_row[a] < rmin:
            rmin = r_row[a]
    qbest = -np.inf
    for a in range(n):
        if r_row[a] <= rmin + tol and q_row[a] > qbest:
            qbest = q_row[a]
    for a in range(n):
        if r_row[a] <= rmin + tol and q_row[a] >= qbest - tol:
            return a
    return 0


@jit
def _max_first(row, n):
    best = row[0]
    for a in range(1, n):
        if row[a] > best:
            best = row[a]
    return best


@jit
def _min_all(row):
    best = row[0]
    for a in range(1, row.shape[0]):
        if row[a] < best:
            best = row[a]
    return best


@jit
def rollout(cum, reward, terminal, start, policy, mu, t_adv, offsets, horizon, u):
    """Run episodes of a fixed policy against a fixed observation map.

    ``policy[s] == -1`` means a uniformly random action.  The perturbation
    ``mu`` fires at step t iff ``t_adv > 0`` and ``t % t_adv == offsets[e]``.
    ``u`` has shape (E, horizon, 2): transition and action uniforms.
    """
    n_ep = offsets.shape[0]
    n_a = reward.shape[1]
    returns = np.zeros(n_ep)
    lengths = np.zeros(n_ep, dtype=np.int64)
    fired = np.zeros((n_ep, horizon), dtype=np.bool_)
    for e in range(n_ep):
        s = start
        total = 0.0
        t = 0
        while t < horizon:
            obs = s
            if t_adv > 0 and t % t_adv == offsets[e]:
                obs = mu[s]
                fired[e, t] = True
            a = policy[obs]
            if a < 0:
                a = uniform_index(u[e, t, 1], n_a)
            total += reward[s, a]
            s = sample_index(cum[s, a], u[e, t, 0])
            t += 1
            if terminal[s]:
                break
        returns[e] = total
        lengths[e] = t
    return returns, lengths, fired


@jit
def value_learning(cum, reward, gap, terminal, start, q, r, learn_regret,
                   alpha_q, alpha_r, gamma, horizon, eps, u, tie_tol, log):
    """Epsilon-greedy Q-learning, optionally with the regret table alongside.

    Mutates ``q`` (and ``r`` when ``learn_regret``) in place.  Behavior is
    value-greedy, or regret-greedy with value tie-break when learning regret.
    ``u`` has shape (E, horizon, 3).  Transitions are written to ``log`` as
    rows (state, action, reward, next_state, done).
    Returns (episode returns, mean episode loss, rows logged, finite flag).
    """
    n_ep = eps.shape[0]
    n_a = reward.shape[1]
    returns = np.zeros(n_ep)
    losses = np.zeros(n_ep)
    n_log = 0
    for e in range(n_ep):
        s = start
        total = 0.0
        loss_sum = 0.0
        t = 0
        while t < horizon:
            if u[e, t, 0] < eps[e]:
                a = uniform_index(u[e, t, 1], n_a)
            elif learn_regret:
                a = greedy_regret(r[s], q[s], tie_tol)
            else:
                a = greedy_max(q[s], n_a, tie_tol)
            rew = reward[s, a]
            nxt = sample_index(cum[s, a], u[e, t, 2])
            done = terminal[nxt]
            target = rew
            if not done:
                target += gamma * _max_first(q[nxt], n_a)
            diff = q[s, a] - target
            q_loss = 0.5 * diff * diff
            q[s, a] = q[s, a] + alpha_q * (target - q[s, a])
            if learn_regret:
                r_target = gap[s, a]
                if not done:
                    r_target += gamma * _min_all(r[nxt])
                rdiff = r[s, a] - r_target
                loss_sum += 0.5 * rdiff * rdiff
                r[s, a] = r[s, a] + alpha_r * (r_target - r[s, a])
                if not np.isfinite(r[s, a]):
                    return returns, losses, n_log, False
            else:
                loss_sum += q_loss
            if not np.isfinite(q[s, a]):
                return returns, losses, n_log, False
            if n_log < log.shape[0]:
                log[n_log, 0] = s
                log[n_log, 1] = a
                log[n_log, 2] = rew
                log[n_log, 3] = nxt
                log[n_log, 4] = 1.0 if done else 0.0
                n_log += 1
            total += rew
            s = nxt
            t += 1
            if done:
                break
        returns[e] = total
        losses[e] = loss_sum / max(t, 1)
    return returns, losses, n_log, True


@jit
def actor_learning(cum, reward, terminal, start, victim, nbhd, sizes, qa,
                   alpha, gamma, horizon, eps, u):
    """Q-learning for an adversary picking which neighbor the victim sees.

    Adversary state is the true state, its action an index into ``nbhd[s]``,
    its reward the negated victim reward.  Perturbs at every step.
    ``u`` has shape (E, horizon, 4).
    """
    n_ep = eps.shape[0]
    n_a = reward.shape[1]
    returns = np.zeros(n_ep)
    for e in range(n_ep):
        s = start
        total = 0.0
        t = 0
        while t < horizon:
            k = sizes[s]
            if u[e, t, 0] < eps[e]:
                idx = uniform_index(u[e, t, 1], k)
            else:
                idx = greedy_max(qa[s], k, 0.0)
            shown = nbhd[s, idx]
            a = victim[shown]
            if a < 0:
                a = uniform_index(u[e, t, 2], n_a)
            rew = reward[s, a]
            nxt = sample_index(cum[s, a], u[e, t, 3])
            done = terminal[nxt]
            target = -rew
            if not done:
                target += gamma * _max_first(qa[nxt], sizes[nxt])
            qa[s, idx] = qa[s, idx] + alpha * (target - qa[s, idx])
            if not np.isfinite(qa[s, idx]):
                return returns, False
            total += rew
            s = nxt
            t += 1
            if done:
                break
        returns[e] = total
    return returns, True


@jit
def myopic_shown(s, nbhd, sizes, composite, qstar):
    """Neighbor of ``s`` whose induced action has the lowest Q*(s, .)."""
    best_state = s
    best_val = np.inf
    for i in range(sizes[s]):
        m = nbhd[s, i]
        val = qstar[s, composite[m]]
        if val < best_val or (val == best_val and m < best_state):
            best_val = val
            best_state = m
    return best_state


@jit
def selector_learning(cum, reward, terminal, starts, sub, qu, nbhd, sizes, qstar,
                      adv_on, alpha, gamma, horizon, eps, u):
    """Q-learning of the binary value/regret dispatcher.

    ``sub[o]`` holds the two candidate actions (regret-greedy, value-greedy)
    at observation ``o``.  In episodes with ``adv_on[e]`` a myopic adversary
    perturbs every observation against the current dispatcher.  Episode
    ``e`` starts at ``starts[e]``; ``u`` has shape (E, horizon, 3).
    """
    n_ep = eps.shape[0]
    n_s = reward.shape[0]
    returns = np.zeros(n_ep)
    composite = np.zeros(n_s, dtype=np.int64)
    for e in range(n_ep):
        s = starts[e]
        total = 0.0
        t = 0
        while t < horizon:
            if adv_on[e]:
                for m in range(n_s):
                    composite[m] = sub[m, greedy_max(qu[m], 2, 0.0)]
                obs = myopic_shown(s, nbhd, sizes, composite, qstar)
            else:
                obs = s
            if u[e, t, 0] < eps[e]:
                c = uniform_index(u[e, t, 1], 2)
            else:
                c = greedy_max(qu[obs], 2, 0.0)
            a = sub[obs, c]
            rew = reward[s, a]
            nxt = sample_index(cum[s, a], u[e, t, 2])
            done = terminal[nxt]
            target = rew
            if not done:
                nobs = nxt
                if adv_on[e]:
                    nobs = myopic_shown(nxt, nbhd, sizes, composite, qstar)
                target += gamma * _max_first(qu[nobs], 2)
            qu[obs, c] = qu[obs, c] + alpha * (target - qu[obs, c])
            if not np.isfinite(qu[obs, c]):
                return returns, False
            total += rew
            s = nxt
            t += 1
            if done:
                break
        returns[e] = total
    return returns, True


def _perturbed_values_loops(P, R, act, clean, fire, gamma):
    n_m, n_s = act.shape
    horizon = fire.shape[0]
    out = np.zeros((n_m, n_s))
    nxt = np.zeros(n_s)
    cur = np.zeros(n_s)
    for m in range(n_m):
        for s in range(n_s):
            nxt[s] = 0.0
        for t in range(horizon - 1, -1, -1):
            for s in range(n_s):
                a = act[m, s] if fire[t] else clean[s]
                acc = 0.0
                for j in range(n_s):
                    acc += P[s, a, j] * nxt[j]
                cur[s] = R[s, a] + gamma * acc
            for s in range(n_s):
                nxt[s] = cur[s]
        for s in range(n_s):
            out[m, s] = nxt[s]
    return out


def _perturbed_values_numpy(P, R, act, clean, fire, gamma):
    n_m, n_s = act.shape
    rows = np.arange(n_s)
    clean_b = np.broadcast_to(clean, act.shape)
    w = np.zeros((n_m, n_s))
    for t in range(fire.shape[0] - 1, -1, -1):
        a = act if fire[t] else clean_b
        w = R[rows, a] + gamma * np.einsum("msj,mj->ms", P[rows, a], w)
    return w


perturbed_values_loops = jit(_perturbed_values_loops)


def perturbed_values(P, R, act, clean, fire, gamma):
    """Finite-horizon values at true states for a batch of perturbed action maps.

    ``act[m, s]`` is the action taken at true state ``s`` when the
    perturbation fires; ``clean[s]`` otherwise; ``fire[t]`` says whether step
    ``t`` (0 = first) is perturbed.  Returns values at step 0, shape (M, S).
    """
    act = np.ascontiguousarray(act, dtype=np.int64)
    clean = np.ascontiguousarray(clean, dtype=np.int64)
    fire = np.ascontiguousarray(fire, dtype=np.bool_)
    if NUMBA_ENABLED:
        return perturbed_values_loops(P, R, act, clean, fire, float(gamma))
    return _perturbed_values_numpy(P, R, act, clean, fire, float(gamma))
