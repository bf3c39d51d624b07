# Presence of this file puts the tests directory on sys.path so the
# test modules can import the shared helpers and gradcheck oracles.
