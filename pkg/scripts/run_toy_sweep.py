"""A script using main entry points to sweep the toy network over theta.

For each theta the corrected and naive gradient estimates are printed next to the exact
gradient of the two-branch model.
"""

from qnet_gradient.estimators import corrected_estimate, naive_ipa_estimate
from qnet_gradient.oracle import TOY_CRITERION, toy_exact, toy_network


def main(reps=10000, seed=0):
    """Estimate the toy gradient at theta = 0.1, 0.2, ..., 0.9 and print a table."""
    net = toy_network()
    print("theta   exact   corrected (ci95)      naive")
    for step in range(1, 10):
        theta = step / 10.0
        _, exact, _, _ = toy_exact(theta)
        corrected = corrected_estimate(net, TOY_CRITERION, theta, reps, seed)
        naive = naive_ipa_estimate(net, TOY_CRITERION, theta, reps, seed)
        print("{:.1f}     {:.3f}   {:.3f} ({:.3f})       {:.3f}".format(
            theta, exact, corrected.mean, corrected.ci95_halfwidth, naive.mean))


if __name__ == '__main__':
    main()
