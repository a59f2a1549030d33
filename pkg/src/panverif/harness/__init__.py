"""Desk-scale reproduction of the verified-driver case study: a mini NIC
driver in Pancake, an executable device/queue simulation that doubles as an
interpreter oracle, and checkers for its protocol properties."""
