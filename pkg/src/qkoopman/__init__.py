"""Hamiltonian parameter retrieval from open-quantum-system observables via mHAVOK."""
