"""Entry point enabling `python -m spatiotemporal`."""
from spatiotemporal.run import main

main()
