"""Convex analysis, polytopes, Monge-Ampère measures and semi-discrete transport."""
