"""Travel-reservation testbed.

Domain model, synthetic scenarios, price/demand forecasting, recommendation,
GA itinerary optimization, carbon heuristics, a reservation runtime that
deploys as a monolith or as microservices, and a load-testing harness.
"""

__version__ = "0.1.0"
