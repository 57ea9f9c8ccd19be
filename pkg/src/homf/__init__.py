"""Higher-order matrix factorization on random-walk transition polynomials."""
