"""The point of the package: prevalent onsets carry real information.

A small Monte Carlo compares the incident-only partial-likelihood
estimator of the onset coefficients with the pairwise pseudolikelihood
estimator that also uses the prevalent cases.

Run:  python demos/02_pairwise_gain.py   (about a minute)
"""

import numpy as np

import paircox

N, KN, REPS = 1000, 50, 20
truth = paircox.simulate.BETA12_AB

pl_estimates, pw_estimates = [], []
for rep in range(REPS):
    cohort, _ = paircox.gen_cohort(paircox.make_scenario("A", N, seed=900 + rep))
    nuisance, _ = paircox.fit_nuisance(cohort)
    schedule = paircox.PairSchedule(cohort.n, KN, shuffle_seed=rep)
    fit = paircox.fit_pairwise(cohort, nuisance, schedule)
    pl_estimates.append(nuisance.beta12_pl)
    pw_estimates.append(fit.beta)
    if rep == 0:
        print(f"per-fit diagnostics: {fit.iterations} Newton steps, "
              f"{fit.n_invalid_pairs}/{fit.n_pairs} invalid pairs skipped")

pl = np.array(pl_estimates)
pw = np.array(pw_estimates)
mse_pl = ((pl - truth) ** 2).mean(axis=0)
mse_pw = ((pw - truth) ** 2).mean(axis=0)

print(f"\n{REPS} replicates at n={N}, K_n={KN}")
print("coef  truth   PL-mean  PW-mean   PL-SD   PW-SD   MSE-ratio")
for k in range(len(truth)):
    print(
        f"x{k + 1:<4} {truth[k]:6.2f} {pl[:, k].mean():8.2f} "
        f"{pw[:, k].mean():8.2f} {pl[:, k].std(ddof=1):7.2f} "
        f"{pw[:, k].std(ddof=1):7.2f} {mse_pl[k] / mse_pw[k]:9.2f}"
    )
print("\nMSE ratios above 1 mean the pairwise estimator is more efficient;")
print("the gain comes from the ~45% of onsets that are prevalent and")
print("invisible to the incident-only fit. (Ratios at 20 replicates are")
print("noisy; the acceptance suite runs the 100-replicate version.)")
